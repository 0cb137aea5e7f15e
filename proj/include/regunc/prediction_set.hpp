#pragma once

#include <optional>
#include <string>
#include <vector>

#include "regunc/gaussian.hpp"

namespace regunc {

/// One test input: its ensemble prediction plus optional target and group
/// tag ("id"/"ood" or a dataset name).
struct PredictionPoint {
  std::string id;
  GaussianEnsemble ensemble;
  std::optional<double> target;
  std::optional<std::string> group;
};

using PredictionSet = std::vector<PredictionPoint>;

}  // namespace regunc
