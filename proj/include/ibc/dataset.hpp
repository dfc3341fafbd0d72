#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "ibc/energy_model.hpp"

namespace ibc::train {

/// Expert demonstrations: per-timestep (observation, action) pairs grouped
/// by trajectory, plus provenance of how each trajectory was produced.
struct DemoDataset {
  struct Trajectory {
    std::vector<model::Observation> observations;
    std::vector<model::Action> actions;
    int config_index = -1;     // grid index the demo was optimized on
    double final_score = 0.0;  // normalized EMD recorded at generation time
  };

  std::vector<Trajectory> trajectories;
  model::ActionBounds bounds;
  std::size_t skipped = 0;  // failed optimizations dropped during generation

  std::size_t pair_count() const;
  void validate() const;  // equal sequence lengths, actions within bounds
};

/// Line-delimited text format: a header line with format version and action
/// bounds, one `traj` line per trajectory carrying provenance, and one
/// record line per timestep (trajectory id, timestep, point count, points,
/// roller pose, action) as round-trippable decimals.
void save_dataset(const std::filesystem::path& path, const DemoDataset& data);
DemoDataset load_dataset(const std::filesystem::path& path);

}  // namespace ibc::train
