#pragma once

#include <algorithm>
#include <chrono>
#include <filesystem>
#include <fstream>
#include <memory>
#include <numeric>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "lapran/losses.hpp"
#include "lapran/metrics.hpp"
#include "lapran/models.hpp"
#include "lapran/nn/adam.hpp"
#include "lapran/nn/serialize.hpp"
#include "lapran/pyramid.hpp"
#include "lapran/reconstructor.hpp"
#include "lapran/sensing.hpp"

namespace lapran::train {

using models::RecDisc;
using models::RecGenFirst;
using models::RecGenStage;
using models::StageModelSpec;

struct TrainConfig {
  long batch_size = 128;
  int max_epochs = 100;
  float learning_rate = 1e-4f;
  float adam_beta1 = 0.9f;
  float adam_beta2 = 0.999f;
  float adam_eps = 1e-8f;
  int early_stop_patience = 10;
  std::uint64_t seed = 0;
  losses::LossWeights<float> loss_weights;
  long filters = 64;
  bool transfer = true;
  bool fusion = true;

  void validate() const {
    if (batch_size < 1) throw std::invalid_argument("train: batch_size must be >= 1");
    if (learning_rate <= 0) throw std::invalid_argument("train: learning_rate must be > 0");
  }

  nlohmann::json to_json() const {
    return {{"batch_size", batch_size},
            {"max_epochs", max_epochs},
            {"learning_rate", learning_rate},
            {"adam_beta1", adam_beta1},
            {"adam_beta2", adam_beta2},
            {"adam_eps", adam_eps},
            {"early_stop_patience", early_stop_patience},
            {"seed", seed},
            {"lambda_adv", loss_weights.lambda_adv},
            {"lambda_euc", loss_weights.lambda_euc},
            {"filters", filters},
            {"transfer", transfer},
            {"fusion", fusion}};
  }
};

/// Patches with their ground-truth pyramids and precomputed measurements.
struct Dataset {
  std::vector<ImagePyramid> pyramids;
  std::vector<sensing::MeasurementSet> measurements;

  long size() const { return static_cast<long>(pyramids.size()); }
};

inline Dataset prepare(const std::vector<ImageTensor>& patches,
                       const sensing::MultiRateSensingMatrix& mat) {
  Dataset ds;
  const int stages = mat.config.stages;
  for (const auto& p : patches) {
    ds.pyramids.push_back(build_pyramid(p, stages));
    ds.measurements.push_back(sensing::encode(p.data, mat));
  }
  return ds;
}

struct EpochMetrics {
  int epoch = 0;
  double train_mse = 0;
  double val_mse = 0;
  double d_loss = 0;
  double g_adv_loss = 0;
  double wall_seconds = 0;
};

struct Checkpoint {
  int stage = 0;
  StageModelSpec spec;
  nn::NamedTensors weights;     // best-validation-epoch generator + discriminator state
  nn::NamedTensors last_state;  // end-of-training state, the resume point
  nn::NamedTensors opt_state;   // adam moments keyed "<param>#m"/"<param>#v" + step counts
  int epoch = 0;
  double best_val_mse = 0;
  std::string rng_state;
  nlohmann::json config_snapshot;
  models::TransferReport transfer_report;
  std::vector<EpochMetrics> history;
};

// ---------------------------------------------------------------------------

/// Uniform facade over the two generator shapes.
struct Generator {
  std::unique_ptr<RecGenFirst<float>> first;
  std::unique_ptr<RecGenStage<float>> stage;

  static Generator make(const StageModelSpec& spec, bool fusion) {
    Generator g;
    if (spec.stage == 1)
      g.first = std::make_unique<RecGenFirst<float>>(spec);
    else
      g.stage = std::make_unique<RecGenStage<float>>(spec, fusion);
    return g;
  }

  void init(Rng& rng) { first ? first->init(rng) : stage->init(rng); }

  Tensorf forward(const Tensorf& i_prev, const Tensorf& y, bool train) {
    if (first) return first->forward(y, train);
    return stage->forward(i_prev, y, train).output;
  }

  void backward(const Tensorf& go) {
    if (first)
      first->backward(go);
    else
      stage->backward(go);
  }

  std::vector<nn::Param<float>*> params() { return first ? first->params() : stage->params(); }
  std::vector<nn::Param<float>*> buffers() {
    return first ? first->buffers() : stage->buffers();
  }
  std::vector<nn::Param<float>*> state() {
    auto out = params();
    for (auto* b : buffers()) out.push_back(b);
    return out;
  }
};

/// Frozen earlier stages used to synthesize the context inputs for stage i.
class FrozenCascade {
 public:
  FrozenCascade(const std::vector<Checkpoint>& prior, int upto_stage) {
    if (static_cast<int>(prior.size()) < upto_stage)
      throw std::runtime_error("missing prerequisite checkpoints for stage " +
                               std::to_string(upto_stage + 1));
    for (int i = 1; i <= upto_stage; ++i) {
      const auto& ck = prior[static_cast<size_t>(i - 1)];
      auto g = Generator::make(ck.spec, true);
      models::restore(g.state(), ck.weights);
      gens_.push_back(std::move(g));
    }
  }

  /// Batched eval-mode forward through stages 1..upto on measurement prefixes.
  Tensorf forward(const std::vector<const sensing::MeasurementSet*>& ms) const {
    const long B = static_cast<long>(ms.size());
    auto& g1 = const_cast<Generator&>(gens_.front());
    const long q1 = (g1.first ? g1.first->spec() : g1.stage->spec()).latent_dim();
    Tensorf y1({B, q1});
    for (long b = 0; b < B; ++b) y1.data.segment(b * q1, q1) = ms[b]->stage_concat(1);
    Tensorf img = g1.forward({}, y1, false);
    for (size_t s = 1; s < gens_.size(); ++s) {
      auto& g = const_cast<Generator&>(gens_[s]);
      const long q = g.stage->spec().latent_dim();
      Tensorf y({B, q});
      for (long b = 0; b < B; ++b)
        y.data.segment(b * q, q) = ms[b]->stage_concat(static_cast<int>(s) + 1);
      img = g.forward(img, y, false);
    }
    return img;
  }

  size_t depth() const { return gens_.size(); }

 private:
  std::vector<Generator> gens_;
};

// ---------------------------------------------------------------------------

namespace detail {

inline Tensorf gather_targets(const Dataset& ds, const std::vector<long>& idx, int stage) {
  const auto& lvl0 = ds.pyramids.front().level(stage);
  const long per = lvl0.data.size();
  Tensorf out({static_cast<long>(idx.size()), lvl0.data.dim(0), lvl0.data.dim(1),
               lvl0.data.dim(2)});
  for (size_t b = 0; b < idx.size(); ++b)
    out.data.segment(static_cast<long>(b) * per, per) =
        ds.pyramids[static_cast<size_t>(idx[b])].level(stage).data.data;
  return out;
}

inline Tensorf gather_measurements(const Dataset& ds, const std::vector<long>& idx,
                                   int stage) {
  auto first = ds.measurements.front().stage_concat(stage);
  const long q = first.size();
  Tensorf out({static_cast<long>(idx.size()), q});
  for (size_t b = 0; b < idx.size(); ++b)
    out.data.segment(static_cast<long>(b) * q, q) =
        ds.measurements[static_cast<size_t>(idx[b])].stage_concat(stage);
  return out;
}

inline Tensorf gather_rows(const Tensorf& all, const std::vector<long>& idx) {
  const long per = all.size() / all.dim(0);
  std::vector<long> sh = all.shape;
  sh[0] = static_cast<long>(idx.size());
  Tensorf out(sh);
  for (size_t b = 0; b < idx.size(); ++b)
    out.data.segment(static_cast<long>(b) * per, per) = all.data.segment(idx[b] * per, per);
  return out;
}

/// Context images for every element of the dataset, synthesized in chunks.
inline Tensorf precompute_context(const FrozenCascade& frozen, const Dataset& ds,
                                  long chunk) {
  Tensorf all;
  long done = 0;
  while (done < ds.size()) {
    const long n = std::min(chunk, ds.size() - done);
    std::vector<const sensing::MeasurementSet*> ms(static_cast<size_t>(n));
    for (long b = 0; b < n; ++b)
      ms[static_cast<size_t>(b)] = &ds.measurements[static_cast<size_t>(done + b)];
    Tensorf img = frozen.forward(ms);
    if (done == 0) {
      std::vector<long> sh = img.shape;
      sh[0] = ds.size();
      all = Tensorf(sh);
    }
    const long per = img.size() / img.dim(0);
    all.data.segment(done * per, n * per) = img.data;
    done += n;
  }
  return all;
}

}  // namespace detail

// ---------------------------------------------------------------------------

/// Trains one stage; earlier stages stay frozen and feed it context. Returns
/// the best-validation-epoch weights.
inline Checkpoint train_stage(int stage, const Dataset& trainset, const Dataset& valset,
                              const sensing::MultiRateSensingMatrix& mat,
                              const std::vector<Checkpoint>& prior, const TrainConfig& cfg,
                              const nn::NamedTensors* transfer_src = nullptr,
                              const Checkpoint* resume_from = nullptr) {
  cfg.validate();
  const auto dims = mat.stage_dims;
  StageModelSpec spec;
  spec.stage = stage;
  spec.channels = mat.config.channels;
  spec.measurement_dim = dims[static_cast<size_t>(stage - 1)];
  spec.filters = cfg.filters;

  Generator gen = Generator::make(spec, cfg.fusion);
  RecDisc<float> disc(spec);
  Rng init_rng(cfg.seed ^ (0x51ed2700ULL + static_cast<std::uint64_t>(stage)));
  gen.init(init_rng);
  disc.init(init_rng);

  Checkpoint ck;
  ck.stage = stage;
  ck.spec = spec;
  ck.config_snapshot = cfg.to_json();

  if (transfer_src != nullptr && resume_from == nullptr) {
    auto rep_g = models::transfer_weights(*transfer_src, gen.state());
    auto rep_d = models::transfer_weights(*transfer_src, models::full_state(disc));
    ck.transfer_report.copied = rep_g.copied;
    ck.transfer_report.fresh = rep_g.fresh;
    ck.transfer_report.copied.insert(ck.transfer_report.copied.end(), rep_d.copied.begin(),
                                     rep_d.copied.end());
    ck.transfer_report.fresh.insert(ck.transfer_report.fresh.end(), rep_d.fresh.begin(),
                                    rep_d.fresh.end());
  }

  nn::AdamConfig<float> acfg{cfg.learning_rate, cfg.adam_beta1, cfg.adam_beta2, cfg.adam_eps};
  nn::Adam<float> adam_g(gen.params(), acfg);
  nn::Adam<float> adam_d(disc.params(), acfg);

  Rng rng(cfg.seed ^ (0xab54a98ceb1f0ad2ULL * static_cast<std::uint64_t>(stage)));
  int start_epoch = 0;

  if (resume_from != nullptr) {
    models::restore(gen.state(), resume_from->last_state);
    models::restore(models::full_state(disc), resume_from->last_state);
    auto load_adam = [&](nn::Adam<float>& adam, std::vector<nn::Param<float>*> ps,
                         const std::string& t_key) {
      for (size_t i = 0; i < ps.size(); ++i) {
        adam.first_moments()[i] = resume_from->opt_state.get(ps[i]->name + "#m").data;
        adam.second_moments()[i] = resume_from->opt_state.get(ps[i]->name + "#v").data;
      }
      adam.set_step_count(
          static_cast<long>(resume_from->opt_state.get(t_key).data[0]));
    };
    load_adam(adam_g, gen.params(), "adam_g#t");
    load_adam(adam_d, disc.params(), "adam_d#t");
    std::istringstream ss(resume_from->rng_state);
    ss >> rng;
    start_epoch = resume_from->epoch;
    ck.transfer_report = resume_from->transfer_report;
    ck.history = resume_from->history;
  }

  // Context inputs from frozen stages are constant for the whole stage.
  Tensorf train_ctx, val_ctx;
  if (stage >= 2) {
    FrozenCascade frozen(prior, stage - 1);
    train_ctx = detail::precompute_context(frozen, trainset, cfg.batch_size);
    val_ctx = detail::precompute_context(frozen, valset, cfg.batch_size);
  }

  std::vector<long> order(static_cast<size_t>(trainset.size()));

  double best_val = std::numeric_limits<double>::infinity();
  nn::NamedTensors best_weights;
  int best_epoch = -1;
  int since_improve = 0;
  if (resume_from != nullptr) {
    // Best-so-far tracking is derivable from the saved history.
    best_weights = resume_from->weights;
    for (size_t i = 0; i < ck.history.size(); ++i)
      if (ck.history[i].val_mse < best_val) {
        best_val = ck.history[i].val_mse;
        best_epoch = ck.history[i].epoch;
        since_improve = static_cast<int>(ck.history.size() - 1 - i);
      }
  }

  auto eval_val_mse = [&]() {
    double acc = 0;
    long done = 0;
    while (done < valset.size()) {
      const long n = std::min<long>(cfg.batch_size, valset.size() - done);
      std::vector<long> idx(static_cast<size_t>(n));
      std::iota(idx.begin(), idx.end(), done);
      Tensorf y = detail::gather_measurements(valset, idx, stage);
      Tensorf target = detail::gather_targets(valset, idx, stage);
      Tensorf ctx = stage >= 2 ? detail::gather_rows(val_ctx, idx) : Tensorf();
      Tensorf o = gen.forward(ctx, y, false);
      acc += static_cast<double>(losses::euclidean_loss(o, target)) * static_cast<double>(n);
      done += n;
    }
    return acc / static_cast<double>(valset.size());
  };

  for (int epoch = start_epoch; epoch < cfg.max_epochs; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    // Shuffle from the identity so the epoch order is a function of the RNG
    // state alone; a resumed run then reproduces it exactly.
    std::iota(order.begin(), order.end(), 0L);
    std::shuffle(order.begin(), order.end(), rng);
    double ep_mse = 0, ep_dloss = 0, ep_gadv = 0;
    long nbatches = 0;

    for (long off = 0; off < trainset.size(); off += cfg.batch_size) {
      const long n = std::min<long>(cfg.batch_size, trainset.size() - off);
      std::vector<long> idx(order.begin() + off, order.begin() + off + n);
      Tensorf y = detail::gather_measurements(trainset, idx, stage);
      Tensorf target = detail::gather_targets(trainset, idx, stage);
      Tensorf ctx = stage >= 2 ? detail::gather_rows(train_ctx, idx) : Tensorf();

      Tensorf o = gen.forward(ctx, y, true);
      const bool use_adv = cfg.loss_weights.lambda_adv != 0.0f;

      if (use_adv) {
        // One discriminator step: real pass backpropped before the fake pass
        // so layer caches stay consistent.
        adam_d.zero_grad();
        Tensorf d_real = disc.forward(target, true);
        Tensorf gr = d_real;
        for (long i = 0; i < gr.size(); ++i)
          gr.data[i] = -1.0f / (losses::clamp_prob(d_real.data[i]) *
                                static_cast<float>(d_real.size()));
        disc.backward(gr);
        Tensorf d_fake = disc.forward(o, true);
        Tensorf gf = d_fake;
        for (long i = 0; i < gf.size(); ++i)
          gf.data[i] = 1.0f / ((1.0f - losses::clamp_prob(d_fake.data[i])) *
                               static_cast<float>(d_fake.size()));
        disc.backward(gf);
        ep_dloss += static_cast<double>(losses::discriminator_loss(d_real, d_fake));
        adam_d.step();
      }

      // Generator step on the weighted total loss.
      adam_g.zero_grad();
      Tensorf go = losses::euclidean_loss_grad(o, target);
      const float mse = losses::euclidean_loss(o, target);
      if (!std::isfinite(mse))
        throw std::runtime_error("train: non-finite loss at stage " + std::to_string(stage) +
                                 " epoch " + std::to_string(epoch));
      go.data *= cfg.loss_weights.lambda_euc;
      if (use_adv) {
        Tensorf d_fake = disc.forward(o, true);
        Tensorf gadv = losses::generator_adv_loss_grad(d_fake);
        Tensorf g_from_adv = disc.backward(gadv);  // pollutes D grads; zeroed next batch
        go.data += cfg.loss_weights.lambda_adv * g_from_adv.data;
        ep_gadv += static_cast<double>(losses::generator_adv_loss(d_fake));
      }
      gen.backward(go);
      adam_g.step();
      ep_mse += static_cast<double>(mse);
      ++nbatches;
    }

    const double val_mse = eval_val_mse();
    const auto t1 = std::chrono::steady_clock::now();
    EpochMetrics em;
    em.epoch = epoch + 1;
    em.train_mse = ep_mse / static_cast<double>(nbatches);
    em.val_mse = val_mse;
    em.d_loss = nbatches ? ep_dloss / static_cast<double>(nbatches) : 0;
    em.g_adv_loss = nbatches ? ep_gadv / static_cast<double>(nbatches) : 0;
    em.wall_seconds = std::chrono::duration<double>(t1 - t0).count();
    ck.history.push_back(em);

    if (val_mse < best_val) {
      best_val = val_mse;
      best_epoch = epoch + 1;
      since_improve = 0;
      best_weights = models::snapshot(gen.state());
      for (const auto& [name, t] : models::snapshot(models::full_state(disc)).entries)
        best_weights.entries[name] = t;
    } else if (++since_improve >= cfg.early_stop_patience) {
      break;
    }
  }

  ck.epoch = static_cast<int>(ck.history.size());
  ck.best_val_mse = best_val;
  ck.weights = best_weights;
  ck.last_state = models::snapshot(gen.state());
  for (const auto& [name, t] : models::snapshot(models::full_state(disc)).entries)
    ck.last_state.entries[name] = t;
  (void)best_epoch;

  // Optimizer state and RNG for exact resume.
  auto dump_adam = [&](nn::Adam<float>& adam, std::vector<nn::Param<float>*> ps,
                       const std::string& t_key) {
    for (size_t i = 0; i < ps.size(); ++i) {
      ck.opt_state.put(ps[i]->name + "#m", ps[i]->shape, adam.first_moments()[i]);
      ck.opt_state.put(ps[i]->name + "#v", ps[i]->shape, adam.second_moments()[i]);
    }
    VecX<float> t(1);
    t[0] = static_cast<float>(adam.step_count());
    ck.opt_state.put(t_key, {1}, t);
  };
  dump_adam(adam_g, gen.params(), "adam_g#t");
  dump_adam(adam_d, disc.params(), "adam_d#t");
  std::ostringstream ss;
  ss << rng;
  ck.rng_state = ss.str();
  return ck;
}

// ---------------------------------------------------------------------------

/// Sequential stage-by-stage training with optional weight transfer.
inline std::vector<Checkpoint> train_pyramid(const Dataset& trainset, const Dataset& valset,
                                             const sensing::MultiRateSensingMatrix& mat,
                                             const TrainConfig& cfg) {
  std::vector<Checkpoint> cks;
  for (int stage = 1; stage <= mat.config.stages; ++stage) {
    const nn::NamedTensors* src = nullptr;
    if (cfg.transfer && stage >= 2) src = &cks.back().weights;
    cks.push_back(train_stage(stage, trainset, valset, mat, cks, cfg, src));
  }
  return cks;
}

struct AblationResult {
  std::vector<double> fused_test_mse;      // per stage, unit domain
  std::vector<double> nofusion_test_mse;   // per stage
  std::vector<Checkpoint> fused, nofusion;
};

/// Trains the standard pyramid and an SR counterpart with the measurement
/// input zeroed at stages >= 2, then reports per-stage test MSE for both.
inline AblationResult ablate_fusion(const Dataset& trainset, const Dataset& valset,
                                    const Dataset& testset,
                                    const sensing::MultiRateSensingMatrix& mat,
                                    const TrainConfig& cfg) {
  auto test_mse = [&](const std::vector<Checkpoint>& cks) {
    std::vector<double> out;
    for (size_t s = 1; s <= cks.size(); ++s) {
      FrozenCascade frozen(cks, static_cast<int>(s));
      Tensorf rec = detail::precompute_context(frozen, testset, cfg.batch_size);
      std::vector<long> all(static_cast<size_t>(testset.size()));
      std::iota(all.begin(), all.end(), 0L);
      Tensorf target = detail::gather_targets(testset, all, static_cast<int>(s));
      out.push_back(static_cast<double>(losses::euclidean_loss(rec, target)));
    }
    return out;
  };

  AblationResult result;
  TrainConfig fused_cfg = cfg;
  fused_cfg.fusion = true;
  result.fused = train_pyramid(trainset, valset, mat, fused_cfg);
  result.fused_test_mse = test_mse(result.fused);

  TrainConfig sr_cfg = cfg;
  sr_cfg.fusion = false;
  result.nofusion = train_pyramid(trainset, valset, mat, sr_cfg);
  result.nofusion_test_mse = test_mse(result.nofusion);
  return result;
}

// ---------------------------------------------------------------------------

inline void save_checkpoint(const Checkpoint& ck, const std::filesystem::path& stage_dir,
                            const std::string& config_hash = "") {
  std::filesystem::create_directories(stage_dir);
  nn::save_tensors(ck.weights, stage_dir / "weights.lpwt");
  nn::save_tensors(ck.last_state, stage_dir / "state.lpwt");
  nn::save_tensors(ck.opt_state, stage_dir / "optimizer.lpwt");
  nlohmann::json manifest = {
      {"stage", ck.stage},
      {"spec", recon::spec_to_json(ck.spec)},
      {"epoch", ck.epoch},
      {"best_val_mse", ck.best_val_mse},
      {"rng_state", ck.rng_state},
      {"config", ck.config_snapshot},
      {"config_hash", config_hash},
      {"transfer_copied", ck.transfer_report.copied},
      {"transfer_fresh", ck.transfer_report.fresh}};
  nlohmann::json hist = nlohmann::json::array();
  for (const auto& em : ck.history)
    hist.push_back({{"epoch", em.epoch},
                    {"train_mse", em.train_mse},
                    {"val_mse", em.val_mse},
                    {"d_loss", em.d_loss},
                    {"g_adv_loss", em.g_adv_loss},
                    {"wall_seconds", em.wall_seconds}});
  manifest["history"] = hist;
  std::ofstream mout(stage_dir / "manifest.json");
  mout << manifest.dump(2) << "\n";
  std::ofstream csv(stage_dir / "metrics.csv");
  csv << "epoch,train_mse,val_mse,d_loss,g_adv_loss,wall_seconds\n";
  for (const auto& em : ck.history)
    csv << em.epoch << "," << em.train_mse << "," << em.val_mse << "," << em.d_loss << ","
        << em.g_adv_loss << "," << em.wall_seconds << "\n";
}

inline Checkpoint load_checkpoint(const std::filesystem::path& stage_dir) {
  Checkpoint ck;
  ck.weights = nn::load_tensors(stage_dir / "weights.lpwt");
  ck.last_state = nn::load_tensors(stage_dir / "state.lpwt");
  ck.opt_state = nn::load_tensors(stage_dir / "optimizer.lpwt");
  std::ifstream min(stage_dir / "manifest.json");
  if (!min) throw std::runtime_error("checkpoint: missing manifest in " + stage_dir.string());
  nlohmann::json manifest = nlohmann::json::parse(min);
  ck.stage = manifest.at("stage").get<int>();
  ck.spec = recon::spec_from_json(manifest.at("spec"));
  ck.epoch = manifest.at("epoch").get<int>();
  ck.best_val_mse = manifest.at("best_val_mse").get<double>();
  ck.rng_state = manifest.at("rng_state").get<std::string>();
  ck.config_snapshot = manifest.at("config");
  ck.transfer_report.copied =
      manifest.at("transfer_copied").get<std::vector<std::string>>();
  ck.transfer_report.fresh = manifest.at("transfer_fresh").get<std::vector<std::string>>();
  for (const auto& h : manifest.at("history")) {
    EpochMetrics em;
    em.epoch = h.at("epoch").get<int>();
    em.train_mse = h.at("train_mse").get<double>();
    em.val_mse = h.at("val_mse").get<double>();
    em.d_loss = h.at("d_loss").get<double>();
    em.g_adv_loss = h.at("g_adv_loss").get<double>();
    em.wall_seconds = h.at("wall_seconds").get<double>();
    ck.history.push_back(em);
  }
  return ck;
}

}  // namespace lapran::train
