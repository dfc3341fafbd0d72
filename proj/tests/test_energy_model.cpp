#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <vector>

#include "ibc/checkpoint.hpp"
#include "ibc/energy_model.hpp"
#include "ibc/errors.hpp"
#include "ibc/fd.hpp"
#include "ibc/io_util.hpp"
#include "ibc/rng.hpp"

using namespace ibc;
using namespace ibc::model;
using ad::Tensor;

namespace {

Observation random_obs(std::size_t m, Rng& rng) {
  std::vector<double> pts(m * 2);
  for (double& v : pts) v = rng.uniform(0.0, 1.0);
  return Observation{Tensor::matrix(m, 2, std::move(pts)),
                     {rng.uniform(0.0, 1.0), rng.uniform(0.0, 1.0)},
                     rng.uniform(0.05, 0.2)};
}

Action random_action(std::size_t n, Rng& rng) {
  std::vector<double> v(n);
  for (double& x : v) x = rng.uniform(-1.0, 1.0);
  return Action{std::move(v)};
}

// Straight-line reimplementation of the encoder forward pass with plain
// loops; the oracle for encode().
std::vector<double> encode_oracle(const EnergyParams& p, const Observation& obs) {
  std::size_t m = obs.points.rows();
  std::size_t h1 = p.enc_w1.cols(), h2 = p.enc_w2.cols(), d = p.proj_w.cols();

  std::vector<double> a1(m * h1), a2(m * h2);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < h1; ++j) {
      double s = p.enc_b1[j];
      for (std::size_t k = 0; k < 2; ++k) s += obs.points.at(i, k) * p.enc_w1.at(k, j);
      a1[i * h1 + j] = std::tanh(s);
    }
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < h2; ++j) {
      double s = p.enc_b2[j];
      for (std::size_t k = 0; k < h1; ++k) s += a1[i * h1 + k] * p.enc_w2.at(k, j);
      a2[i * h2 + j] = std::tanh(s);
    }
  std::vector<double> pooled(h2 + 3, -1e300);
  for (std::size_t j = 0; j < h2; ++j)
    for (std::size_t i = 0; i < m; ++i)
      pooled[j] = std::max(pooled[j], a2[i * h2 + j]);
  pooled[h2] = obs.roller_center[0];
  pooled[h2 + 1] = obs.roller_center[1];
  pooled[h2 + 2] = obs.roller_radius;

  std::vector<double> embed(d);
  for (std::size_t j = 0; j < d; ++j) {
    double s = p.proj_b[j];
    for (std::size_t k = 0; k < h2 + 3; ++k) s += pooled[k] * p.proj_w.at(k, j);
    embed[j] = s;
  }
  return embed;
}

}  // namespace

TEST_CASE("encode matches a straight-line forward reimplementation") {
  Rng rng(3);
  EnergyParams p = EnergyParams::init(2, rng);
  Observation obs = random_obs(17, rng);
  Tensor embed = encode(p, obs);
  auto oracle = encode_oracle(p, obs);
  REQUIRE(embed.size() == oracle.size());
  for (std::size_t i = 0; i < oracle.size(); ++i)
    CHECK(embed[i] == doctest::Approx(oracle[i]).epsilon(1e-12));
}

TEST_CASE("encode is exactly invariant to point permutations") {
  Rng rng(5);
  EnergyParams p = EnergyParams::init(2, rng);
  Observation obs = random_obs(12, rng);

  std::vector<std::size_t> perm(12);
  for (std::size_t i = 0; i < perm.size(); ++i) perm[i] = i;
  rng.shuffle(perm);
  std::vector<double> shuffled(12 * 2);
  for (std::size_t i = 0; i < perm.size(); ++i) {
    shuffled[i * 2] = obs.points.at(perm[i], 0);
    shuffled[i * 2 + 1] = obs.points.at(perm[i], 1);
  }
  Observation obs2 = obs;
  obs2.points = Tensor::matrix(12, 2, std::move(shuffled));

  Tensor e1 = encode(p, obs);
  Tensor e2 = encode(p, obs2);
  for (std::size_t i = 0; i < e1.size(); ++i) CHECK(e1[i] == e2[i]);
}

TEST_CASE("duplicated points leave the embedding unchanged") {
  Rng rng(6);
  EnergyParams p = EnergyParams::init(2, rng);
  Observation one{Tensor::matrix(1, 2, {0.3, 0.6}), {0.5, 0.5}, 0.1};
  Tensor base = encode(p, one);
  for (std::size_t k : {2, 5, 9}) {
    std::vector<double> pts;
    for (std::size_t i = 0; i < k; ++i) {
      pts.push_back(0.3);
      pts.push_back(0.6);
    }
    Observation many{Tensor::matrix(k, 2, std::move(pts)), {0.5, 0.5}, 0.1};
    Tensor e = encode(p, many);
    for (std::size_t i = 0; i < e.size(); ++i) CHECK(e[i] == base[i]);
  }
}

TEST_CASE("encode rejects empty or malformed observations") {
  Rng rng(7);
  EnergyParams p = EnergyParams::init(2, rng);
  CHECK_THROWS_AS(encode(p, Observation{Tensor::zeros({0, 2}), {0, 0}, 0.1}), Error);
  CHECK_THROWS_AS(encode(p, Observation{Tensor::zeros({3}), {0, 0}, 0.1}), ShapeError);
  Observation nan_obs{Tensor::matrix(1, 2, {0.1, std::nan("")}), {0, 0}, 0.1};
  CHECK_THROWS_AS(encode(p, nan_obs), NumericError);
}

TEST_CASE("initial energies are small and deterministic") {
  Rng rng(8);
  EnergyParams p = EnergyParams::init(2, rng);
  Rng inputs(9);
  for (int i = 0; i < 1000; ++i) {
    Observation obs = random_obs(1 + inputs.index(24), inputs);
    Action a = random_action(2, inputs);
    double e = energy(p, obs, a);
    CHECK(std::abs(e) < 10.0);
    CHECK(e == energy(p, obs, a));  // determinism
  }
}

TEST_CASE("recording on a graph does not change the energy value") {
  Rng rng(10);
  EnergyParams p = EnergyParams::init(2, rng);
  Observation obs = random_obs(9, rng);
  Action a = random_action(2, rng);
  double plain = energy(p, obs, a);

  ad::Graph g;
  ad::Graph::Scope scope(g);
  auto tensors = p.tensors();
  std::vector<Tensor> leaves;
  for (const Tensor& t : tensors) leaves.push_back(g.leaf(t));
  EnergyParams attached = EnergyParams::from_tensors(leaves);
  double recorded = energies(attached, obs, Tensor::matrix(1, 2, a.values)).value();
  CHECK(plain == recorded);
}

TEST_CASE("action gradient matches finite differences at random points") {
  Rng rng(11);
  EnergyParams p = EnergyParams::init(2, rng);
  for (int trial = 0; trial < 100; ++trial) {
    Observation obs = random_obs(1 + rng.index(8), rng);
    Action a = random_action(2, rng);
    auto grad = action_gradient(p, obs, a);

    Tensor fd = ad::finite_difference_gradient(
        [&](const Tensor& x) {
          return energy(p, obs, Action{{x[0], x[1]}});
        },
        Tensor::vec(a.values), 1e-5);
    for (std::size_t i = 0; i < 2; ++i) {
      double tol = 1e-6 + 1e-4 * std::max(std::abs(grad[i]), std::abs(fd[i]));
      CHECK(std::abs(grad[i] - fd[i]) <= tol);
    }
  }
}

TEST_CASE("zeroed head weights give zero action gradient") {
  Rng rng(12);
  EnergyParams p = EnergyParams::init(2, rng);
  auto t = p.tensors();
  for (std::size_t i = 6; i < t.size(); ++i) t[i] = Tensor::zeros(t[i].shape());
  EnergyParams zeroed = EnergyParams::from_tensors(t);
  Observation obs = random_obs(5, rng);
  auto grad = action_gradient(zeroed, obs, random_action(2, rng));
  CHECK(grad[0] == 0.0);
  CHECK(grad[1] == 0.0);
}

TEST_CASE("constant energy offset does not change the action gradient") {
  Rng rng(13);
  EnergyParams p = EnergyParams::init(2, rng);
  auto t = p.tensors();
  std::vector<double> bias(t[11].data().begin(), t[11].data().end());
  bias[0] += 37.5;  // head output bias
  t[11] = Tensor({1, 1}, bias);
  EnergyParams shifted = EnergyParams::from_tensors(t);

  Observation obs = random_obs(6, rng);
  Action a = random_action(2, rng);
  auto g1 = action_gradient(p, obs, a);
  auto g2 = action_gradient(shifted, obs, a);
  CHECK(g1[0] == g2[0]);
  CHECK(g1[1] == g2[1]);
}

TEST_CASE("batched action gradients agree with single-action calls") {
  Rng rng(14);
  EnergyParams p = EnergyParams::init(2, rng);
  Observation obs = random_obs(7, rng);
  std::vector<double> rows;
  std::vector<Action> actions;
  for (int i = 0; i < 5; ++i) {
    Action a = random_action(2, rng);
    rows.insert(rows.end(), a.values.begin(), a.values.end());
    actions.push_back(a);
  }
  auto batch = action_gradients(p, obs, Tensor::matrix(5, 2, rows));
  for (std::size_t i = 0; i < actions.size(); ++i) {
    CHECK(batch.energies[i] == doctest::Approx(energy(p, obs, actions[i])).epsilon(1e-12));
    auto g = action_gradient(p, obs, actions[i]);
    CHECK(batch.gradients.at(i, 0) == doctest::Approx(g[0]).epsilon(1e-9));
    CHECK(batch.gradients.at(i, 1) == doctest::Approx(g[1]).epsilon(1e-9));
  }
}

TEST_CASE("candidate softmax basics") {
  auto uniform = candidate_softmax(std::vector<double>{1.5, 1.5, 1.5, 1.5});
  for (double v : uniform) CHECK(v == doctest::Approx(0.25).epsilon(1e-14));

  auto two = candidate_softmax(std::vector<double>{0.0, std::log(3.0)});
  CHECK(two[0] == doctest::Approx(0.75).epsilon(1e-12));
  CHECK(two[1] == doctest::Approx(0.25).epsilon(1e-12));

  Rng rng(15);
  std::vector<double> e(33);
  for (double& v : e) v = rng.uniform(-4.0, 4.0);
  auto p1 = candidate_softmax(e);
  for (double& v : e) v += 123.456;  // shift invariance
  auto p2 = candidate_softmax(e);
  double total = 0.0;
  for (std::size_t i = 0; i < p1.size(); ++i) {
    CHECK(p1[i] == doctest::Approx(p2[i]).epsilon(1e-12));
    total += p1[i];
  }
  CHECK(std::abs(total - 1.0) <= 1e-12);
}

TEST_CASE("checkpoint round-trips bit-exactly") {
  Rng rng(16);
  EnergyParams p = EnergyParams::init(2, rng);
  auto path = std::filesystem::temp_directory_path() / "ibc_test_energy.ckpt";
  save_energy_checkpoint(path, p);
  EnergyParams q = load_energy_checkpoint(path);

  auto tp = p.tensors(), tq = q.tensors();
  REQUIRE(tp.size() == tq.size());
  for (std::size_t i = 0; i < tp.size(); ++i) {
    REQUIRE(tp[i].shape() == tq[i].shape());
    for (std::size_t j = 0; j < tp[i].size(); ++j) CHECK(tp[i][j] == tq[i][j]);
  }

  // save again: byte-identical files
  auto path2 = std::filesystem::temp_directory_path() / "ibc_test_energy2.ckpt";
  save_energy_checkpoint(path2, q);
  CHECK(io::read_file(path) == io::read_file(path2));

  CHECK(peek_magic(path) == kEnergyMagic);
  std::filesystem::remove(path);
  std::filesystem::remove(path2);
}

TEST_CASE("checkpoint loader rejects wrong magic and truncation") {
  Rng rng(17);
  EnergyParams p = EnergyParams::init(2, rng);
  auto path = std::filesystem::temp_directory_path() / "ibc_test_bad.ckpt";
  save_energy_checkpoint(path, p);

  std::string bytes = io::read_file(path);
  io::atomic_write_file(path, std::string("XXXXXXXX") + bytes.substr(8));
  CHECK_THROWS_AS(load_energy_checkpoint(path), IoError);

  io::atomic_write_file(path, bytes.substr(0, bytes.size() / 2));
  CHECK_THROWS_AS(load_energy_checkpoint(path), IoError);
  std::filesystem::remove(path);
}

TEST_CASE("action bounds validate and clamp") {
  ActionBounds b{{-1.0, -2.0}, {1.0, 2.0}};
  b.validate();
  auto c = b.clamped(std::vector<double>{5.0, -3.0});
  CHECK(c[0] == 1.0);
  CHECK(c[1] == -2.0);
  CHECK(b.contains(std::vector<double>{0.0, 0.0}));
  CHECK(!b.contains(std::vector<double>{0.0, 2.5}));

  ActionBounds bad{{1.0}, {1.0}};
  CHECK_THROWS_AS(bad.validate(), Error);
}
