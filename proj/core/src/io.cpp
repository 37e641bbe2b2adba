#include "mlrem/io.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

namespace mlrem {

namespace {

std::ofstream open_out(const std::string& path) {
  std::ofstream out(path, std::ios::binary);  // binary: LF endings everywhere
  if (!out) throw std::runtime_error("cannot open for writing: " + path);
  return out;
}

}  // namespace

std::string format_double(double v) {
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  if (std::isnan(v)) return "nan";
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

void save_dataset_csv(const Dataset& ds, const GroundTruth& gt, const std::string& path) {
  std::ofstream out = open_out(path);
  const int n = ds.n();
  const int d = ds.d();
  const bool with_z = static_cast<int>(ds.z_.size()) == n;
  for (int j = 0; j < d; ++j) out << "x_" << j << ",";
  out << "y";
  if (with_z) out << ",z";
  out << "\n";
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < d; ++j) out << format_double(ds.x(i, j)) << ",";
    out << format_double(ds.y(i));
    if (with_z) out << "," << static_cast<int>(ds.z_[i]);
    out << "\n";
  }

  nlohmann::json manifest;
  manifest["d"] = d;
  manifest["n"] = n;
  manifest["seed"] = ds.seed;
  manifest["sigma"] = gt.sigma;
  manifest["pi1"] = gt.pi_star[0];
  manifest["theta_star"] = std::vector<double>(gt.theta_star.begin(), gt.theta_star.end());
  std::ofstream mout = open_out(path + ".manifest.json");
  mout << manifest.dump(2) << "\n";
}

LoadedDataset load_dataset_csv(const std::string& path) {
  std::ifstream min(path + ".manifest.json");
  if (!min) throw std::runtime_error("missing manifest: " + path + ".manifest.json");
  nlohmann::json manifest = nlohmann::json::parse(min);
  const int d = manifest.at("d").get<int>();
  const int n = manifest.at("n").get<int>();
  const std::vector<double> ts = manifest.at("theta_star").get<std::vector<double>>();

  LoadedDataset out;
  out.ground_truth = make_ground_truth(
      Eigen::Map<const Eigen::VectorXd>(ts.data(), static_cast<Eigen::Index>(ts.size())),
      manifest.at("pi1").get<double>(), manifest.at("sigma").get<double>());

  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open: " + path);
  std::string line;
  std::getline(in, line);
  const bool with_z = line.size() >= 2 && line.substr(line.size() - 2) == ",z";

  Dataset& ds = out.dataset;
  ds.seed = manifest.at("seed").get<std::uint64_t>();
  ds.x.resize(n, d);
  ds.y.resize(n);
  if (with_z) ds.z_.resize(n);
  for (int i = 0; i < n; ++i) {
    if (!std::getline(in, line)) throw std::runtime_error("truncated CSV: " + path);
    std::istringstream row(line);
    std::string cell;
    for (int j = 0; j < d; ++j) {
      std::getline(row, cell, ',');
      ds.x(i, j) = std::stod(cell);
    }
    std::getline(row, cell, ',');
    ds.y(i) = std::stod(cell);
    if (with_z) {
      std::getline(row, cell, ',');
      ds.z_[i] = static_cast<std::int8_t>(std::stoi(cell));
    }
  }
  return out;
}

void save_trajectory_csv(const std::vector<TrajectoryRecord>& records, const std::string& path) {
  std::ofstream out = open_out(path);
  out << "t,theta_err,weight_err,varphi,phi,nll,out_of_plane\n";
  for (const auto& r : records) {
    out << r.t << "," << format_double(r.theta_err) << "," << format_double(r.weight_err) << ","
        << format_double(r.varphi) << "," << format_double(r.phi) << ",";
    if (r.nll.has_value()) out << format_double(*r.nll);
    out << "," << format_double(r.out_of_plane) << "\n";
  }
}

}  // namespace mlrem
