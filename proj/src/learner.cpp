#include "posafe/learner.hpp"

#include "posafe/parallel.hpp"
#include "posafe/rng.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <ostream>
#include <random>
#include <set>

namespace posafe {

using nlohmann::json;

namespace {

constexpr std::size_t kChunk = 16;

using ConstMatMap = Eigen::Map<const Mat>;
using ConstVecMap = Eigen::Map<const Vec>;

}  // namespace

// ---------------------------------------------------------------------------
// Model

Model::Model(std::vector<std::size_t> layers, SafetyPoset poset, std::vector<LinearExtension> extensions,
             std::vector<std::size_t> constraint_map, CombineMode mode, std::uint64_t seed, double init_raw_gain,
             double temperature)
    : layers_(std::move(layers)),
      poset_(std::move(poset)),
      extensions_(std::move(extensions)),
      map_(std::move(constraint_map)),
      mode_(mode),
      temperature_(temperature),
      seed_(seed) {
  if (layers_.size() < 2) throw std::invalid_argument("an MLP needs at least input and output sizes");
  for (auto s : layers_)
    if (s == 0) throw std::invalid_argument("layer sizes must be positive");
  if (extensions_.empty()) throw EmptyHeads("model needs at least one head");
  if (poset_.size() != map_.size()) throw std::invalid_argument("poset size must equal the constraint count");
  for (const auto& e : extensions_)
    if (!poset_.is_linear_extension(e)) throw std::invalid_argument("head order is not a linear extension");
  if (!(temperature_ > 0.0)) throw std::invalid_argument("temperature must be positive");

  const std::size_t depth = layers_.size() - 1;
  std::size_t off = 0;
  w_off_.assign(heads(), std::vector<std::size_t>(depth));
  b_off_.assign(heads(), std::vector<std::size_t>(depth));
  for (std::size_t h = 0; h < heads(); ++h)
    for (std::size_t l = 0; l < depth; ++l) {
      w_off_[h][l] = off;
      off += layers_[l + 1] * layers_[l];
      b_off_[h][l] = off;
      off += layers_[l + 1];
    }
  gains_offset_ = off;
  off += 2 * constraints();
  logits_offset_ = off;
  off += heads();

  theta_ = Vec::Zero(static_cast<Eigen::Index>(off));
  std::mt19937_64 rng(derive_seed(seed, stream::kInit));
  for (std::size_t h = 0; h < heads(); ++h)
    for (std::size_t l = 0; l < depth; ++l) {
      const double bound = 1.0 / std::sqrt(static_cast<double>(layers_[l]));
      std::uniform_real_distribution<double> dist(-bound, bound);
      for (std::size_t i = w_off_[h][l]; i < b_off_[h][l] + layers_[l + 1]; ++i)
        theta_[static_cast<Eigen::Index>(i)] = dist(rng);
    }
  theta_.segment(static_cast<Eigen::Index>(gains_offset_), static_cast<Eigen::Index>(2 * constraints()))
      .setConstant(init_raw_gain);
}

namespace {

void check_io(const Scenario& scenario, const std::vector<std::size_t>& layers) {
  if (layers.size() < 2) throw std::invalid_argument("an MLP needs at least input and output sizes");
  if (layers.front() != scenario.feature_dim())
    throw std::invalid_argument("input size must be " + std::to_string(scenario.feature_dim()));
  if (layers.back() != scenario.system().control_dim())
    throw std::invalid_argument("output size must be " + std::to_string(scenario.system().control_dim()));
}

}  // namespace

Model Model::posafenet(const Scenario& scenario, CombineMode mode, std::size_t heads, std::vector<std::size_t> layers,
                       std::uint64_t seed, double init_raw_gain) {
  if (heads == 0) throw EmptyHeads("heads must be at least 1");
  check_io(scenario, layers);
  const auto& poset = scenario.poset();
  auto all = poset.enumerate_linear_extensions(heads + 1);
  std::vector<LinearExtension> chosen;
  if (all.size() <= heads) {
    chosen = all;
    for (std::size_t k = 0; chosen.size() < heads; ++k)
      chosen.push_back(poset.sample_linear_extension(derive_seed(seed, stream::kExtensions, k)));
  } else {
    std::set<LinearExtension> seen;
    for (std::size_t k = 0; chosen.size() < heads && k < 1000 * heads; ++k) {
      auto e = poset.sample_linear_extension(derive_seed(seed, stream::kExtensions, k));
      if (seen.insert(e).second) chosen.push_back(std::move(e));
    }
    for (std::size_t k = 0; chosen.size() < heads; ++k) chosen.push_back(all[k % all.size()]);
  }
  std::vector<std::size_t> map(scenario.constraint_count());
  std::iota(map.begin(), map.end(), std::size_t{0});
  Model m(std::move(layers), poset, std::move(chosen), std::move(map), mode, seed, init_raw_gain);
  m.scenario_name = scenario.name();
  return m;
}

Model Model::fixed_order(const Scenario& scenario, LinearExtension order, std::vector<std::size_t> layers,
                         std::uint64_t seed, double init_raw_gain) {
  check_io(scenario, layers);
  // The order itself is the (total) poset.
  std::vector<Relation> chain;
  for (std::size_t k = 0; k + 1 < order.size(); ++k) chain.push_back({order.order[k], order.order[k + 1]});
  SafetyPoset total(scenario.constraint_count(), chain);
  std::vector<std::size_t> map(scenario.constraint_count());
  std::iota(map.begin(), map.end(), std::size_t{0});
  Model m(std::move(layers), std::move(total), {std::move(order)}, std::move(map), CombineMode::Hard, seed,
          init_raw_gain);
  m.scenario_name = scenario.name();
  return m;
}

Model Model::unconstrained(std::vector<std::size_t> layers, std::uint64_t seed) {
  return Model(std::move(layers), SafetyPoset::antichain(0), {LinearExtension{}}, {}, CombineMode::Hard, seed);
}

ParamRange Model::head_range(std::size_t h) const {
  const std::size_t depth = layers_.size() - 1;
  return {w_off_.at(h)[0], b_off_[h][depth - 1] + layers_.back() - w_off_[h][0]};
}

std::array<double, 2> Model::gains(std::size_t j) const {
  const auto base = static_cast<Eigen::Index>(gains_offset_ + 2 * j);
  return {softplus(theta_[base]), softplus(theta_[base + 1])};
}

HeadCombiner Model::combiner() const { return HeadCombiner{mode_, logits(), temperature_}; }

std::vector<ProjectionHead> Model::projection_heads() const {
  std::vector<ProjectionHead> out;
  out.reserve(heads());
  for (std::size_t h = 0; h < heads(); ++h) out.emplace_back(poset_, extensions_[h], h, h);
  return out;
}

Vec Model::nominal(std::size_t head, const Vec& z) const {
  if (static_cast<std::size_t>(z.size()) != feature_dim()) throw std::invalid_argument("feature size mismatch");
  Vec a = z;
  const std::size_t depth = layers_.size() - 1;
  for (std::size_t l = 0; l < depth; ++l) {
    const auto out = static_cast<Eigen::Index>(layers_[l + 1]), in = static_cast<Eigen::Index>(layers_[l]);
    ConstMatMap w(theta_.data() + w_off_[head][l], out, in);
    ConstVecMap b(theta_.data() + b_off_[head][l], out);
    Vec next = w * a + b;
    if (l + 1 < depth) next = next.cwiseMax(0.0);
    a = std::move(next);
  }
  return a;
}

std::vector<Halfspace> Model::halfspaces(std::span<const BarrierTerms> terms) const {
  std::vector<Halfspace> hs;
  hs.reserve(constraints());
  for (std::size_t j = 0; j < constraints(); ++j) {
    Halfspace h = terms[map_[j]].halfspace(gains(j));
    h.constraint_id = j;
    hs.push_back(std::move(h));
  }
  return hs;
}

HeadsOutput Model::act(const Vec& z, std::span<const BarrierTerms> terms, Phase phase, const Vec* gumbel_noise) const {
  const auto hs = halfspaces(terms);
  std::vector<Vec> noms;
  noms.reserve(heads());
  for (std::size_t h = 0; h < heads(); ++h) noms.push_back(nominal(h, z));
  const auto ph = projection_heads();
  return run_heads(ph, combiner(), hs, noms, phase, gumbel_noise);
}

const char* to_string(CombineMode mode) {
  switch (mode) {
    case CombineMode::Mixture: return "mixture";
    case CombineMode::Hard: return "hard";
    case CombineMode::Gumbel: return "gumbel";
  }
  return "?";
}

CombineMode combine_mode_from_string(const std::string& s) {
  if (s == "mixture") return CombineMode::Mixture;
  if (s == "hard") return CombineMode::Hard;
  if (s == "gumbel") return CombineMode::Gumbel;
  throw std::invalid_argument("unknown combine mode '" + s + "'");
}

json Model::to_json() const {
  json j;
  j["format"] = "posafe-checkpoint";
  j["version"] = 1;
  j["scenario"] = scenario_name;
  j["scenario_hash"] = scenario_hash;
  j["seed"] = seed_;
  j["layers"] = layers_;
  j["mode"] = to_string(mode_);
  j["temperature"] = temperature_;
  j["constraint_map"] = map_;
  j["poset_size"] = poset_.size();
  json rels = json::array();
  for (const auto& r : poset_.covering_relations()) rels.push_back({r.lower, r.higher});
  j["poset_relations"] = rels;
  json exts = json::array();
  for (const auto& e : extensions_) exts.push_back(e.order);
  j["extensions"] = exts;
  std::vector<double> gains;
  for (std::size_t c = 0; c < constraints(); ++c) {
    const auto g = this->gains(c);
    gains.push_back(g[0]);
    gains.push_back(g[1]);
  }
  j["gains_effective"] = gains;
  j["params"] = std::vector<double>(theta_.data(), theta_.data() + theta_.size());
  return j;
}

Model Model::from_json(const json& j) {
  if (j.value("format", "") != "posafe-checkpoint") throw std::runtime_error("not a checkpoint file");
  if (j.at("version").get<int>() != 1) throw std::runtime_error("unsupported checkpoint version");
  std::vector<Relation> rels;
  for (const auto& r : j.at("poset_relations")) rels.push_back({r.at(0).get<std::size_t>(), r.at(1).get<std::size_t>()});
  SafetyPoset poset(j.at("poset_size").get<std::size_t>(), rels);
  std::vector<LinearExtension> exts;
  for (const auto& e : j.at("extensions")) exts.push_back({e.get<std::vector<std::size_t>>()});
  Model m(j.at("layers").get<std::vector<std::size_t>>(), std::move(poset), std::move(exts),
          j.at("constraint_map").get<std::vector<std::size_t>>(),
          combine_mode_from_string(j.at("mode").get<std::string>()), j.at("seed").get<std::uint64_t>(), 0.5,
          j.at("temperature").get<double>());
  const auto params = j.at("params").get<std::vector<double>>();
  if (params.size() != static_cast<std::size_t>(m.theta_.size()))
    throw std::runtime_error("checkpoint parameter count does not match its layout");
  m.theta_ = Eigen::Map<const Vec>(params.data(), static_cast<Eigen::Index>(params.size()));
  m.scenario_name = j.value("scenario", "");
  m.scenario_hash = j.value("scenario_hash", "");
  return m;
}

// ---------------------------------------------------------------------------
// Samples

std::vector<TrainingSample> build_samples(const Scenario& scenario, const Dataset& data,
                                          std::span<const std::size_t> sample_indices, std::size_t* skipped) {
  std::vector<std::vector<BarrierSpec>> specs;
  specs.reserve(data.episodes.size());
  for (const auto& ep : data.episodes) specs.push_back(scenario.barriers(ep));
  std::vector<TrainingSample> out;
  out.reserve(sample_indices.size());
  std::size_t bad = 0;
  for (std::size_t idx : sample_indices) {
    const auto& s = data.samples.at(idx);
    const auto& ep = data.episodes.at(s.episode);
    try {
      out.push_back({scenario.features(s.state, ep), compile_all_terms(scenario.system(), specs[s.episode], s.state),
                     s.control});
    } catch (const GeometryError&) {
      ++bad;
    } catch (const FrameSingularity&) {
      ++bad;
    }
  }
  if (skipped) *skipped = bad;
  return out;
}

// ---------------------------------------------------------------------------
// Loss and gradient

namespace {

struct ChunkResult {
  double loss = 0.0;
  Vec grad;
  std::size_t hits = 0;
  double min_res = std::numeric_limits<double>::infinity();
  double min_pre = std::numeric_limits<double>::infinity();
};

struct TapeStep {
  std::size_t j;
  bool active;
};

ChunkResult run_chunk(const Model& model, std::span<const TrainingSample> samples, std::span<const std::size_t> idx,
                      std::size_t batch_begin, std::size_t batch_total, Phase phase, const Mat* noise,
                      bool want_grad) {
  ChunkResult out;
  const auto& theta = model.params();
  const auto& layers = model.layers();
  const std::size_t depth = layers.size() - 1;
  const std::size_t H = model.heads();
  const std::size_t n = model.constraints();
  const auto m = static_cast<Eigen::Index>(model.control_dim());
  const auto b = static_cast<Eigen::Index>(idx.size());
  const auto& map = model.constraint_map();
  if (want_grad) out.grad = Vec::Zero(theta.size());

  Mat z(static_cast<Eigen::Index>(model.feature_dim()), b);
  for (Eigen::Index i = 0; i < b; ++i) z.col(i) = samples[idx[i]].z;

  // Thresholds and their gain sensitivities per (constraint, sample).
  std::vector<std::array<double, 2>> kappa(n);
  for (std::size_t j = 0; j < n; ++j) kappa[j] = model.gains(j);
  Mat c(static_cast<Eigen::Index>(n), b), s0(static_cast<Eigen::Index>(n), b), s1(static_cast<Eigen::Index>(n), b);
  for (Eigen::Index i = 0; i < b; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      const auto& t = samples[idx[i]].terms[map[j]];
      c(j, i) = t.threshold(kappa[j]);
      const auto sens = t.threshold_gain_sensitivity(kappa[j]);
      s0(j, i) = sens[0];
      s1(j, i) = sens[1];
    }

  // Combination weights per sample.
  const HeadCombiner comb = model.combiner();
  const bool soft_gumbel = phase == Phase::Training && model.mode() != CombineMode::Mixture;
  Mat weights(static_cast<Eigen::Index>(H), b);
  if (soft_gumbel) {
    if (noise == nullptr || noise->rows() != static_cast<Eigen::Index>(H) ||
        noise->cols() < static_cast<Eigen::Index>(batch_begin) + b)
      throw std::invalid_argument("Gumbel training needs an H x batch noise matrix");
    for (Eigen::Index i = 0; i < b; ++i)
      weights.col(i) = softmax((comb.logits + noise->col(static_cast<Eigen::Index>(batch_begin) + i)) / comb.temperature);
  } else {
    const Vec w = combination_weights(comb, phase);
    for (Eigen::Index i = 0; i < b; ++i) weights.col(i) = w;
  }
  const bool one_hot = phase == Phase::Inference && model.mode() != CombineMode::Mixture;
  const std::size_t selected = one_hot ? argmax_lowest(comb.logits) : 0;

  // Forward.
  std::vector<std::vector<Mat>> acts(H);
  std::vector<Mat> finals(H);
  std::vector<std::vector<std::vector<TapeStep>>> tapes(H);
  for (std::size_t h = 0; h < H; ++h) {
    if (one_hot && h != selected) continue;
    auto& a = acts[h];
    a.reserve(depth + 1);
    a.push_back(z);
    for (std::size_t l = 0; l < depth; ++l) {
      const auto rows = static_cast<Eigen::Index>(layers[l + 1]), cols = static_cast<Eigen::Index>(layers[l]);
      ConstMatMap w(theta.data() + model.weight_offset(h, l), rows, cols);
      ConstVecMap bias(theta.data() + model.bias_offset(h, l), rows);
      Mat pre = w * a.back();
      pre.colwise() += bias;
      if (l + 1 < depth) {
        out.min_pre = std::min(out.min_pre, pre.cwiseAbs().minCoeff());
        pre = pre.cwiseMax(0.0);
      }
      a.push_back(std::move(pre));
    }
    Mat u = a.back();
    auto& tape = tapes[h];
    tape.resize(static_cast<std::size_t>(b));
    const auto& ext = model.extensions()[h].order;
    for (Eigen::Index i = 0; i < b; ++i) {
      Vec ui = u.col(i);
      tape[i].reserve(ext.size());
      for (std::size_t j : ext) {
        const Vec& aj = samples[idx[i]].terms[map[j]].a;
        const double residual = c(j, i) - aj.dot(ui);
        out.min_res = std::min(out.min_res, std::abs(residual));
        if (std::abs(residual) <= tol::kBoundary) ++out.hits;
        if (aj.norm() < tol::kNorm)
          throw GeometryError(GeometryErrorKind::DegenerateNormal, "degenerate normal in training sample");
        // Same arithmetic as project(); the Jacobian uses the kBoundary branch.
        if (residual > tol::kFeas) ui = ui + (residual / aj.squaredNorm()) * aj;
        tape[i].push_back({j, residual > tol::kBoundary});
      }
      u.col(i) = ui;
    }
    finals[h] = std::move(u);
  }

  Mat gu(m, b);
  for (Eigen::Index i = 0; i < b; ++i) {
    Vec ui;
    if (one_hot) {
      ui = finals[selected].col(i);
    } else {
      ui = Vec::Zero(m);
      for (std::size_t h = 0; h < H; ++h) ui += weights(static_cast<Eigen::Index>(h), i) * finals[h].col(i);
    }
    const Vec diff = ui - samples[idx[i]].target;
    out.loss += diff.squaredNorm();
    gu.col(i) = 2.0 * diff / static_cast<double>(batch_total);
  }
  if (!want_grad) return out;

  // Combiner logits.
  auto& grad = out.grad;
  const auto logit_off = static_cast<Eigen::Index>(model.logits_range().offset);
  if (!one_hot) {
    const double scale = soft_gumbel ? 1.0 / comb.temperature : 1.0;
    for (Eigen::Index i = 0; i < b; ++i) {
      Vec gw(static_cast<Eigen::Index>(H));
      for (std::size_t h = 0; h < H; ++h) gw[static_cast<Eigen::Index>(h)] = gu.col(i).dot(finals[h].col(i));
      const Vec w = weights.col(i);
      grad.segment(logit_off, static_cast<Eigen::Index>(H)) += scale * w.cwiseProduct(gw.array().matrix() - Vec::Constant(w.size(), w.dot(gw)));
    }
  }

  // Projection chains, then MLPs.
  Vec gc = Vec::Zero(static_cast<Eigen::Index>(n));
  Mat gc_sample = Mat::Zero(static_cast<Eigen::Index>(n), b);
  for (std::size_t h = 0; h < H; ++h) {
    if (one_hot && h != selected) continue;
    Mat dp(m, b);
    for (Eigen::Index i = 0; i < b; ++i) {
      Vec g = (one_hot ? 1.0 : weights(static_cast<Eigen::Index>(h), i)) * gu.col(i);
      const auto& tape = tapes[h][i];
      for (auto it = tape.rbegin(); it != tape.rend(); ++it) {
        if (!it->active) continue;
        const Vec& aj = samples[idx[i]].terms[map[it->j]].a;
        const double n2 = aj.squaredNorm();
        const double ga = g.dot(aj) / n2;
        gc_sample(static_cast<Eigen::Index>(it->j), i) += ga;
        g -= ga * aj;
      }
      dp.col(i) = g;
    }
    const auto& a = acts[h];
    for (std::size_t l = depth; l-- > 0;) {
      const auto rows = static_cast<Eigen::Index>(layers[l + 1]), cols = static_cast<Eigen::Index>(layers[l]);
      Eigen::Map<Mat> gw(grad.data() + model.weight_offset(h, l), rows, cols);
      Eigen::Map<Vec> gb(grad.data() + model.bias_offset(h, l), rows);
      gw.noalias() += dp * a[l].transpose();
      gb += dp.rowwise().sum();
      if (l == 0) break;
      ConstMatMap w(theta.data() + model.weight_offset(h, l), rows, cols);
      Mat da = w.transpose() * dp;
      dp = da.cwiseProduct((a[l].array() > 0.0).cast<double>().matrix());
    }
  }

  const auto gain_off = static_cast<Eigen::Index>(model.gains_range().offset);
  for (std::size_t j = 0; j < n; ++j) {
    const auto jj = static_cast<Eigen::Index>(j);
    const double g0 = gc_sample.row(jj).dot(s0.row(jj));
    const double g1 = gc_sample.row(jj).dot(s1.row(jj));
    grad[gain_off + 2 * jj] += g0 * softplus_derivative(theta[gain_off + 2 * jj]);
    grad[gain_off + 2 * jj + 1] += g1 * softplus_derivative(theta[gain_off + 2 * jj + 1]);
  }
  return out;
}

}  // namespace

LossGrad loss_and_grad(const Model& model, std::span<const TrainingSample> samples, std::span<const std::size_t> batch,
                       Phase phase, const Mat* gumbel_noise, bool want_grad) {
  LossGrad out;
  if (want_grad) out.grad = Vec::Zero(model.params().size());
  out.min_abs_residual = std::numeric_limits<double>::infinity();
  out.min_abs_preactivation = std::numeric_limits<double>::infinity();
  if (batch.empty()) return out;

  const std::size_t chunks = (batch.size() + kChunk - 1) / kChunk;
  std::vector<ChunkResult> results(chunks);
  parallel_for(chunks, [&](std::size_t k) {
    const std::size_t begin = k * kChunk;
    const std::size_t len = std::min(kChunk, batch.size() - begin);
    results[k] = run_chunk(model, samples, batch.subspan(begin, len), begin, batch.size(), phase, gumbel_noise,
                           want_grad);
  });
  // Fixed reduction order keeps results independent of the thread count.
  for (const auto& r : results) {
    out.loss += r.loss;
    if (want_grad) out.grad += r.grad;
    out.boundary_hits += r.hits;
    out.min_abs_residual = std::min(out.min_abs_residual, r.min_res);
    out.min_abs_preactivation = std::min(out.min_abs_preactivation, r.min_pre);
  }
  out.loss /= static_cast<double>(batch.size());
  return out;
}

// ---------------------------------------------------------------------------
// Training

namespace {

Mat gumbel_matrix(std::size_t heads, std::size_t cols, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  Mat g(static_cast<Eigen::Index>(heads), static_cast<Eigen::Index>(cols));
  for (Eigen::Index c = 0; c < g.cols(); ++c)
    for (Eigen::Index r = 0; r < g.rows(); ++r) g(r, c) = gumbel_from_uniform(unif(rng));
  return g;
}

}  // namespace

TrainResult train(Model& model, const Scenario& scenario, const Dataset& data, const TrainConfig& cfg) {
  if (data.samples.empty()) throw std::invalid_argument("training needs a nonempty dataset");
  if (cfg.batch_size == 0) throw std::invalid_argument("batch size must be positive");

  const std::size_t n_ep = data.episodes.size();
  std::size_t n_val = 0;
  if (n_ep > 1 && cfg.val_fraction > 0.0)
    n_val = std::clamp<std::size_t>(static_cast<std::size_t>(std::ceil(cfg.val_fraction * static_cast<double>(n_ep))),
                                    1, n_ep - 1);
  const std::size_t first_val = n_ep - n_val;
  std::vector<std::size_t> train_idx, val_idx;
  for (std::size_t i = 0; i < data.samples.size(); ++i)
    (data.samples[i].episode >= first_val ? val_idx : train_idx).push_back(i);

  TrainResult result;
  std::size_t skipped_train = 0, skipped_val = 0;
  const auto train_set = build_samples(scenario, data, train_idx, &skipped_train);
  const auto val_set = build_samples(scenario, data, val_idx, &skipped_val);
  result.skipped_samples = skipped_train + skipped_val;
  result.train_samples = train_set.size();
  result.val_samples = val_set.size();
  if (train_set.empty()) throw std::invalid_argument("no usable training samples");

  Vec& theta = model.params();
  Vec m1 = Vec::Zero(theta.size()), m2 = Vec::Zero(theta.size());
  std::size_t step = 0;
  const bool needs_noise = model.mode() != CombineMode::Mixture;

  std::vector<std::size_t> order(train_set.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::vector<std::size_t> val_all(val_set.size());
  std::iota(val_all.begin(), val_all.end(), std::size_t{0});

  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    std::mt19937_64 shuffle_rng(derive_seed(cfg.seed, stream::kShuffle, epoch));
    std::shuffle(order.begin(), order.end(), shuffle_rng);
    double sum = 0.0;
    std::size_t hits = 0;
    for (std::size_t begin = 0; begin < order.size(); begin += cfg.batch_size) {
      const std::size_t len = std::min(cfg.batch_size, order.size() - begin);
      std::span<const std::size_t> batch(order.data() + begin, len);
      ++step;
      Mat noise;
      if (needs_noise) noise = gumbel_matrix(model.heads(), len, derive_seed(cfg.seed, stream::kGumbel, step));
      const auto lg = loss_and_grad(model, train_set, batch, Phase::Training, needs_noise ? &noise : nullptr);
      if (!std::isfinite(lg.loss) || !lg.grad.allFinite())
        throw NonFiniteLoss("non-finite loss at epoch " + std::to_string(epoch) + ", step " + std::to_string(step),
                            epoch, step);
      sum += lg.loss * static_cast<double>(len);
      hits += lg.boundary_hits;

      m1 = cfg.beta1 * m1 + (1.0 - cfg.beta1) * lg.grad;
      m2 = cfg.beta2 * m2 + (1.0 - cfg.beta2) * lg.grad.cwiseAbs2();
      const double c1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(step));
      const double c2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(step));
      theta.array() -= cfg.learning_rate * (m1.array() / c1) / ((m2.array() / c2).sqrt() + cfg.adam_eps);
    }
    EpochStats st;
    st.epoch = epoch;
    st.train_mse = sum / static_cast<double>(order.size());
    st.val_mse = val_set.empty() ? std::numeric_limits<double>::quiet_NaN()
                                 : loss_and_grad(model, val_set, val_all, Phase::Inference, nullptr, false).loss;
    st.boundary_hits = hits;
    result.curve.push_back(st);
  }
  return result;
}

void write_curve_csv(const std::vector<EpochStats>& curve, std::ostream& out) {
  out << "epoch,train_mse,val_mse\n";
  const auto old = out.precision(17);
  for (const auto& e : curve) out << e.epoch << ',' << e.train_mse << ',' << e.val_mse << '\n';
  out.precision(old);
}

// ---------------------------------------------------------------------------

std::vector<GradCheckGroup> gradient_check(const Model& model, std::span<const TrainingSample> samples,
                                           std::span<const std::size_t> batch, Phase phase, const Mat* gumbel_noise,
                                           double step) {
  const auto analytic = loss_and_grad(model, samples, batch, phase, gumbel_noise).grad;
  Model probe = model;
  auto fd = [&](std::size_t p) {
    auto& th = probe.params();
    const double orig = th[static_cast<Eigen::Index>(p)];
    th[static_cast<Eigen::Index>(p)] = orig + step;
    const double up = loss_and_grad(probe, samples, batch, phase, gumbel_noise, false).loss;
    th[static_cast<Eigen::Index>(p)] = orig - step;
    const double down = loss_and_grad(probe, samples, batch, phase, gumbel_noise, false).loss;
    th[static_cast<Eigen::Index>(p)] = orig;
    return (up - down) / (2.0 * step);
  };
  std::vector<std::pair<std::string, ParamRange>> groups = {
      {"mlp", model.mlp_range()}, {"gains", model.gains_range()}, {"logits", model.logits_range()}};
  std::vector<GradCheckGroup> out;
  for (const auto& [name, range] : groups) {
    if (range.size == 0) continue;
    Vec num(static_cast<Eigen::Index>(range.size));
    for (std::size_t k = 0; k < range.size; ++k) num[static_cast<Eigen::Index>(k)] = fd(range.offset + k);
    const Vec ana = analytic.segment(static_cast<Eigen::Index>(range.offset), static_cast<Eigen::Index>(range.size));
    const double denom = std::max({ana.norm(), num.norm(), 1e-12});
    out.push_back({name, (ana - num).norm() / denom, ana.norm()});
  }
  return out;
}

}  // namespace posafe
