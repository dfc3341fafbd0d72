#include "ibc/dataset.hpp"

#include <charconv>
#include <cstdlib>
#include <sstream>
#include <string>

#include "ibc/errors.hpp"
#include "ibc/io_util.hpp"

namespace ibc::train {

std::size_t DemoDataset::pair_count() const {
  std::size_t n = 0;
  for (const auto& t : trajectories) n += t.actions.size();
  return n;
}

void DemoDataset::validate() const {
  bounds.validate();
  for (std::size_t k = 0; k < trajectories.size(); ++k) {
    const auto& t = trajectories[k];
    if (t.observations.size() != t.actions.size())
      throw Error(strf("trajectory ", k, " has ", t.observations.size(),
                       " observations vs ", t.actions.size(), " actions"));
    for (const auto& a : t.actions)
      if (!bounds.contains(a.values, 1e-12))
        throw Error(strf("trajectory ", k, " holds an out-of-bounds action"));
  }
}

namespace {

void append_values(std::string& out, std::span<const double> values) {
  for (double v : values) {
    out += ' ';
    out += io::format_double(v);
  }
}

struct LineParser {
  std::istringstream in;
  std::string word;
  std::size_t line_no;

  LineParser(const std::string& line, std::size_t n) : in(line), line_no(n) {}

  double num() {
    if (!(in >> word))
      throw IoError(strf("dataset line ", line_no, ": missing numeric field"));
    char* end = nullptr;
    double v = std::strtod(word.c_str(), &end);
    if (end != word.c_str() + word.size())
      throw IoError(strf("dataset line ", line_no, ": bad number '", word, "'"));
    return v;
  }

  std::size_t count() { return static_cast<std::size_t>(num()); }

  std::string token() {
    if (!(in >> word)) throw IoError(strf("dataset line ", line_no, ": missing field"));
    return word;
  }
};

}  // namespace

void save_dataset(const std::filesystem::path& path, const DemoDataset& data) {
  data.validate();
  std::string out = "ibc-demos v1 dims " + std::to_string(data.bounds.dims()) +
                    " skipped " + std::to_string(data.skipped) + " lo";
  append_values(out, data.bounds.lo);
  out += " hi";
  append_values(out, data.bounds.hi);
  out += '\n';

  for (std::size_t k = 0; k < data.trajectories.size(); ++k) {
    const auto& t = data.trajectories[k];
    out += "traj " + std::to_string(k) + " steps " + std::to_string(t.actions.size()) +
           " config " + std::to_string(t.config_index) + " score " +
           io::format_double(t.final_score) + '\n';
    for (std::size_t step = 0; step < t.actions.size(); ++step) {
      const auto& obs = t.observations[step];
      out += std::to_string(k);
      out += ' ';
      out += std::to_string(step);
      out += ' ';
      out += std::to_string(obs.points.rows());
      append_values(out, obs.points.data());
      append_values(out, obs.roller_center);
      out += ' ';
      out += io::format_double(obs.roller_radius);
      append_values(out, t.actions[step].values);
      out += '\n';
    }
  }
  io::atomic_write_file(path, out);
}

DemoDataset load_dataset(const std::filesystem::path& path) {
  std::istringstream in(io::read_file(path));
  std::string line;
  if (!std::getline(in, line)) throw IoError(strf("dataset ", path.string(), " is empty"));

  DemoDataset data;
  std::size_t line_no = 1;
  {
    LineParser p(line, line_no);
    if (p.token() != "ibc-demos" || p.token() != "v1")
      throw IoError(strf("dataset ", path.string(), " has an unsupported header"));
    if (p.token() != "dims") throw IoError("dataset header: expected 'dims'");
    std::size_t dims = p.count();
    if (p.token() != "skipped") throw IoError("dataset header: expected 'skipped'");
    data.skipped = p.count();
    if (p.token() != "lo") throw IoError("dataset header: expected 'lo'");
    for (std::size_t i = 0; i < dims; ++i) data.bounds.lo.push_back(p.num());
    if (p.token() != "hi") throw IoError("dataset header: expected 'hi'");
    for (std::size_t i = 0; i < dims; ++i) data.bounds.hi.push_back(p.num());
  }
  std::size_t dims = data.bounds.dims();

  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    LineParser p(line, line_no);
    std::string first = p.token();
    if (first == "traj") {
      p.count();  // trajectory id, implied by order
      if (p.token() != "steps") throw IoError(strf("dataset line ", line_no, ": bad traj line"));
      p.count();
      if (p.token() != "config") throw IoError(strf("dataset line ", line_no, ": bad traj line"));
      DemoDataset::Trajectory t;
      t.config_index = static_cast<int>(p.num());
      if (p.token() != "score") throw IoError(strf("dataset line ", line_no, ": bad traj line"));
      t.final_score = p.num();
      data.trajectories.push_back(std::move(t));
      continue;
    }

    std::size_t traj_id = static_cast<std::size_t>(std::strtod(first.c_str(), nullptr));
    if (traj_id >= data.trajectories.size())
      throw IoError(strf("dataset line ", line_no, ": record before its traj line"));
    p.count();  // timestep, implied by order
    std::size_t m = p.count();
    std::vector<double> pts(m * 2);
    for (double& v : pts) v = p.num();
    model::Observation obs;
    obs.points = ad::Tensor::matrix(m, 2, std::move(pts));
    obs.roller_center = {p.num(), p.num()};
    obs.roller_radius = p.num();
    model::Action act;
    for (std::size_t i = 0; i < dims; ++i) act.values.push_back(p.num());
    auto& t = data.trajectories[traj_id];
    t.observations.push_back(std::move(obs));
    t.actions.push_back(std::move(act));
  }
  data.validate();
  return data;
}

}  // namespace ibc::train
