#pragma once

// Shared plumbing for the experiment implementations (internal header).

#include <filesystem>
#include <fstream>
#include <functional>
#include <string>
#include <vector>

#include "slegff/diffusion.hpp"
#include "slegff/experiments.hpp"
#include "slegff/spectral.hpp"

namespace slegff::experiments::detail {

namespace fs = std::filesystem;
using nlohmann::json;

std::string iso_now();
std::string g17(double v);

// Lossless-text CSV writer with a fixed column order.
class Csv {
 public:
  Csv(const std::string& path, const std::string& header);
  void row(const std::vector<std::string>& cells);

 private:
  std::ofstream f_;
};

// Deterministic sharding: work is cut into n_shards index ranges, each shard
// draws from its own stream, and results are merged in shard order no matter
// which thread ran them.
void parallel_shards(int n_shards, int workers, const std::function<void(int)>& fn);
std::vector<std::pair<std::uint64_t, std::uint64_t>> split_range(std::uint64_t n,
                                                                 int shards);

double p_num(const json& p, const std::string& key, double dflt);
std::int64_t p_int(const json& p, const std::string& key, std::int64_t dflt);
std::vector<double> p_vec(const json& p, const std::string& key,
                          std::vector<double> dflt);
std::string p_str(const json& p, const std::string& key, const std::string& dflt);

json criterion(const std::string& id, const std::string& what, bool pass,
               const json& details);

spectral::SpectralSystem obtain_system(double kappa, int m_nodes,
                                       const std::string& cache_dir);
diffusion::DiffusionConfig diffusion_config(double kappa, double dt_base);

std::vector<double> conditioned_windings(std::uint64_t seed, std::uint64_t tag,
                                         double kappa, double dt_base,
                                         const diffusion::ConditioningWindow& window,
                                         std::uint64_t n_paths, int workers,
                                         diffusion::SamplerKind kind,
                                         const spectral::SpectralSystem* sys,
                                         std::uint64_t* attempts_out = nullptr);

json exp_kpz_table(const ExperimentConfig&, const std::string&,
                   std::vector<std::string>&);
json exp_spectral_check(const ExperimentConfig&, const std::string&,
                        std::vector<std::string>&);
json exp_winding_variance(const ExperimentConfig&, const std::string&,
                          std::vector<std::string>&);
json exp_winding_moments(const ExperimentConfig&, const std::string&,
                         std::vector<std::string>&);
json exp_sle_dimension(const ExperimentConfig&, const std::string&,
                       std::vector<std::string>&);
json exp_scaling_check(const ExperimentConfig&, const std::string&,
                       std::vector<std::string>&);
json exp_levelline_bound(const ExperimentConfig&, const std::string&,
                         std::vector<std::string>&);
json exp_flowline_square_scaling(const ExperimentConfig&, const std::string&,
                                 std::vector<std::string>&);
json exp_whitney_stats(const ExperimentConfig&, const std::string&,
                       std::vector<std::string>&);
json exp_curve_mass(const ExperimentConfig&, const std::string&,
                    std::vector<std::string>&);

}  // namespace slegff::experiments::detail
