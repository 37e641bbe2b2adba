#pragma once

#include <string>
#include <vector>

#include "mlrem/emcore.hpp"
#include "mlrem/model.hpp"

namespace mlrem {

/// Writes the dataset as CSV with header `x_0,...,x_{d-1},y[,z]` (z column
/// present when labels were retained) and a sidecar manifest
/// `<path>.manifest.json` carrying {d, n, seed, sigma, pi1, theta_star}.
/// Values use '.' decimals, LF line endings, round-trip precision.
void save_dataset_csv(const Dataset& ds, const GroundTruth& gt, const std::string& path);

/// Reads back a dataset written by save_dataset_csv (manifest required).
struct LoadedDataset {
  Dataset dataset;
  GroundTruth ground_truth;
};
LoadedDataset load_dataset_csv(const std::string& path);

/// Trajectory CSV: `t,theta_err,weight_err,varphi,phi,nll,out_of_plane`
/// (empty nll field when absent).
void save_trajectory_csv(const std::vector<TrajectoryRecord>& records, const std::string& path);

/// Shortest decimal string that round-trips the double.
std::string format_double(double v);

}  // namespace mlrem
