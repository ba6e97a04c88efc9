#pragma once

#include "posafe/composition.hpp"
#include "posafe/dataset.hpp"
#include "posafe/scenarios.hpp"

#include <json.hpp>

#include <cstdint>
#include <iosfwd>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace posafe {

class NonFiniteLoss : public std::runtime_error {
 public:
  NonFiniteLoss(const std::string& what, std::size_t epoch, std::size_t step)
      : std::runtime_error(what), epoch_(epoch), step_(step) {}
  std::size_t epoch() const noexcept { return epoch_; }
  std::size_t step() const noexcept { return step_; }

 private:
  std::size_t epoch_, step_;
};

struct ParamRange {
  std::size_t offset = 0;
  std::size_t size = 0;
};

/// H ReLU MLPs feeding H projection chains, plus per-constraint softplus
/// gains and combiner logits, all stored in one flat parameter vector.
///
/// The model enforces a subset of the scenario constraints: local constraint
/// j is scenario constraint constraint_map[j], and the extensions and poset
/// are expressed in local indices. An empty map gives an unprotected MLP.
class Model {
 public:
  Model(std::vector<std::size_t> layers, SafetyPoset poset, std::vector<LinearExtension> extensions,
        std::vector<std::size_t> constraint_map, CombineMode mode, std::uint64_t seed, double init_raw_gain = 0.5,
        double temperature = 1.0);

  /// Heads over linear extensions of the scenario poset: all extensions when
  /// there are at most `heads`, padded by greedy sampling; otherwise `heads`
  /// distinct sampled extensions.
  static Model posafenet(const Scenario& scenario, CombineMode mode, std::size_t heads,
                         std::vector<std::size_t> layers, std::uint64_t seed, double init_raw_gain = 0.5);
  /// One head with a fixed enforcement order over all scenario constraints.
  static Model fixed_order(const Scenario& scenario, LinearExtension order, std::vector<std::size_t> layers,
                           std::uint64_t seed, double init_raw_gain = 0.5);
  static Model unconstrained(std::vector<std::size_t> layers, std::uint64_t seed);

  std::size_t heads() const noexcept { return extensions_.size(); }
  std::size_t constraints() const noexcept { return map_.size(); }
  std::size_t feature_dim() const noexcept { return layers_.front(); }
  std::size_t control_dim() const noexcept { return layers_.back(); }
  const std::vector<std::size_t>& layers() const noexcept { return layers_; }
  const std::vector<LinearExtension>& extensions() const noexcept { return extensions_; }
  const std::vector<std::size_t>& constraint_map() const noexcept { return map_; }
  const SafetyPoset& poset() const noexcept { return poset_; }
  CombineMode mode() const noexcept { return mode_; }
  void set_mode(CombineMode mode) { mode_ = mode; }
  double temperature() const noexcept { return temperature_; }
  std::uint64_t seed() const noexcept { return seed_; }

  Vec& params() noexcept { return theta_; }
  const Vec& params() const noexcept { return theta_; }
  ParamRange mlp_range() const { return {0, gains_offset_}; }
  ParamRange head_range(std::size_t h) const;
  ParamRange gains_range() const { return {gains_offset_, 2 * constraints()}; }
  ParamRange logits_range() const { return {logits_offset_, heads()}; }

  /// Softplus gains (κ₁, κ₂) of local constraint j.
  std::array<double, 2> gains(std::size_t j) const;
  Vec logits() const { return theta_.segment(static_cast<Eigen::Index>(logits_offset_), static_cast<Eigen::Index>(heads())); }
  HeadCombiner combiner() const;
  std::vector<ProjectionHead> projection_heads() const;

  Vec nominal(std::size_t head, const Vec& z) const;
  /// Local halfspaces at the model's gains; `terms` is scenario-indexed.
  std::vector<Halfspace> halfspaces(std::span<const BarrierTerms> terms) const;
  /// Full policy step through run_heads. Event indices are local.
  HeadsOutput act(const Vec& z, std::span<const BarrierTerms> terms, Phase phase = Phase::Inference,
                  const Vec* gumbel_noise = nullptr) const;

  std::string scenario_name;
  std::string scenario_hash;

  nlohmann::json to_json() const;
  static Model from_json(const nlohmann::json& j);

  // Layout helpers used by the gradient code.
  std::size_t weight_offset(std::size_t h, std::size_t l) const { return w_off_[h][l]; }
  std::size_t bias_offset(std::size_t h, std::size_t l) const { return b_off_[h][l]; }

 private:
  std::vector<std::size_t> layers_;
  SafetyPoset poset_;
  std::vector<LinearExtension> extensions_;
  std::vector<std::size_t> map_;
  CombineMode mode_;
  double temperature_;
  std::uint64_t seed_;
  Vec theta_;
  std::vector<std::vector<std::size_t>> w_off_, b_off_;
  std::size_t gains_offset_ = 0;
  std::size_t logits_offset_ = 0;
};

const char* to_string(CombineMode mode);
CombineMode combine_mode_from_string(const std::string& s);

/// One imitation sample with precomputed barrier terms (scenario-indexed).
struct TrainingSample {
  Vec z;
  std::vector<BarrierTerms> terms;
  Vec target;
};

/// Builds training samples; samples whose barriers fail to compile are
/// skipped and counted in `skipped`.
std::vector<TrainingSample> build_samples(const Scenario& scenario, const Dataset& data,
                                          std::span<const std::size_t> sample_indices, std::size_t* skipped = nullptr);

struct LossGrad {
  double loss = 0.0;            // mean over the batch of ‖u* − u‖²
  Vec grad;                     // same layout as Model::params()
  std::size_t boundary_hits = 0;  // projection residuals within kBoundary of zero
  double min_abs_residual = 0.0;  // smallest |c − a·u| seen before any projection step
  double min_abs_preactivation = 0.0;
};

/// Exact reverse-mode gradient of the batch MSE. In the training phase the
/// hard and Gumbel modes use the soft Gumbel weights with one noise column
/// per sample (`gumbel_noise` is H × batch); mixture ignores the noise. The
/// inference phase evaluates the deployed combination.
LossGrad loss_and_grad(const Model& model, std::span<const TrainingSample> samples,
                       std::span<const std::size_t> batch, Phase phase, const Mat* gumbel_noise = nullptr,
                       bool want_grad = true);

struct TrainConfig {
  std::size_t epochs = 20;
  std::size_t batch_size = 64;
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  double val_fraction = 0.1;
  std::uint64_t seed = 0;
};

struct EpochStats {
  std::size_t epoch = 0;  // 1-based
  double train_mse = 0.0;  // mean batch loss over the epoch
  double val_mse = 0.0;    // inference-phase MSE on held-out episodes
  std::size_t boundary_hits = 0;
};

struct TrainResult {
  std::vector<EpochStats> curve;
  std::size_t skipped_samples = 0;
  std::size_t train_samples = 0;
  std::size_t val_samples = 0;
};

/// Adam on the MSE imitation loss; trains `model` in place. The last
/// ceil(val_fraction · episodes) episodes are held out when there is more
/// than one episode.
TrainResult train(Model& model, const Scenario& scenario, const Dataset& data, const TrainConfig& config);

void write_curve_csv(const std::vector<EpochStats>& curve, std::ostream& out);

struct GradCheckGroup {
  std::string name;
  double rel_error = 0.0;
  double grad_norm = 0.0;
};

/// Central differences of the batch loss with respect to every parameter,
/// compared per parameter group (mlp, gains, logits) by relative error of
/// the group vectors.
std::vector<GradCheckGroup> gradient_check(const Model& model, std::span<const TrainingSample> samples,
                                           std::span<const std::size_t> batch, Phase phase, const Mat* gumbel_noise,
                                           double step = 1e-6);

}  // namespace posafe
