#include "deeprank/trainer.hpp"

#include <chrono>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "deeprank/parallel.hpp"
#include "deeprank/rank_objective.hpp"

namespace deeprank {

std::size_t default_stitch_side(std::size_t crop) {
  const double side = static_cast<double>(crop) * 256.0 / 227.0;
  auto even = static_cast<std::size_t>(std::lround(side / 2.0)) * 2;
  return std::max<std::size_t>(even, crop + (crop % 2));
}

void LossLog::write_csv(const std::filesystem::path& path) const {
  std::ofstream f(path);
  if (!f) throw std::runtime_error("cannot write loss log '" + path.string() + "'");
  f << "epoch,train_loss,heldout_loss,seconds\n";
  f << std::setprecision(9);
  for (const auto& r : epochs) {
    f << r.epoch << ',' << r.train_loss << ',';
    if (r.heldout_loss) f << *r.heldout_loss;
    f << ',' << std::setprecision(4) << r.seconds << std::setprecision(9) << '\n';
  }
  if (!f) throw std::runtime_error("write to '" + path.string() + "' failed");
}

double held_out_loss(const Network<float>& net, std::span<const PersonImage> images,
                     std::span<const RankingUnit> units, std::size_t stitch_side, std::size_t threads) {
  if (units.empty()) throw std::invalid_argument("held_out_loss: no units");
  const std::size_t crop = net.config().input_side;
  std::vector<double> losses(units.size());
  parallel_for(units.size(), threads, [&](std::size_t i) {
    const auto& u = units[i];
    auto score = [&](std::size_t candidate) {
      return static_cast<double>(
          score_pair(net, central_crop(stitch(images[u.probe], images[candidate], stitch_side).image, crop)));
    };
    UnitScores s;
    s.positive = score(u.positive);
    for (auto r : u.references) s.negatives.push_back(score(r));
    losses[i] = unit_loss(s);
  });
  double total = 0;
  for (double l : losses) total += l;
  return total / static_cast<double>(units.size());
}

namespace {

void clear(Gradients<float>& g) {
  for (auto& t : g) t.fill(0.0f);
}

struct UnitOutcome {
  double loss = 0.0;
};

UnitOutcome run_unit(const Network<float>& net, std::span<const PersonImage> images, const RankingUnit& unit,
                     std::size_t stitch_side, std::size_t crop, float grad_scale, std::uint64_t seed,
                     Gradients<float>& grads) {
  Rng rng(seed);
  const std::size_t pairs = 1 + unit.references.size();
  std::vector<ScoreResult<float>> forwards;
  forwards.reserve(pairs);
  for (std::size_t k = 0; k < pairs; ++k) {
    const std::size_t candidate = k == 0 ? unit.positive : unit.references[k - 1];
    const StitchedPair base = stitch(images[unit.probe], images[candidate], stitch_side);
    const PairVariant variant = PairVariant::from_ordinal(static_cast<int>(rng() % 8));
    const Tensor<float> input = random_crop(augment_variant(base, variant).image, crop, rng);
    forwards.push_back(score_pair(net, input, Mode::train, rng));
  }
  UnitScores scores;
  scores.positive = forwards[0].score;
  for (std::size_t k = 1; k < pairs; ++k) scores.negatives.push_back(forwards[k].score);
  for (const auto& f : forwards) {
    if (!std::isfinite(f.score)) return {std::numeric_limits<double>::quiet_NaN()};
  }
  const double loss = unit_loss(scores);
  const UnitGrads g = unit_grad(scores);
  backward_pair(net, forwards[0].cache, static_cast<float>(g.d_positive) * grad_scale, grads);
  for (std::size_t k = 1; k < pairs; ++k) {
    backward_pair(net, forwards[k].cache, static_cast<float>(g.d_negatives[k - 1]) * grad_scale, grads);
  }
  return {loss};
}

void add_into(Gradients<float>& dst, const Gradients<float>& src) {
  for (std::size_t i = 0; i < dst.size(); ++i) {
    float* d = dst[i].data();
    const float* s = src[i].data();
    for (std::size_t j = 0; j < dst[i].size(); ++j) d[j] += s[j];
  }
}

std::string curriculum_text(const SamplerPolicy& policy) { return policy.curriculum.to_string(); }

}  // namespace

TrainResult train(Network<float>& net, std::span<const PersonImage> train_set, const TrainConfig& cfg,
                  const SamplerPolicy& policy, const TrainHooks& hooks, std::span<const PersonImage> heldout_set) {
  if (cfg.batch_units == 0) throw std::invalid_argument("train: batch_units must be at least 1");
  const std::size_t crop = cfg.crop ? cfg.crop : net.config().input_side;
  if (crop != net.config().input_side) {
    throw std::invalid_argument("train: crop " + std::to_string(crop) + " does not match network input side " +
                                std::to_string(net.config().input_side));
  }
  const std::size_t side = cfg.stitch_side ? cfg.stitch_side : default_stitch_side(crop);
  if (side < crop) throw std::invalid_argument("train: stitch side smaller than crop");

  if (cfg.compute_input_mean && !train_set.empty()) {
    net.input_mean = channel_mean(std::vector<PersonImage>(train_set.begin(), train_set.end()));
  }

  OptState<float> opt = make_opt_state<float>(net.params(), cfg.sgd);
  Gradients<float> grads = zero_gradients(net);
  std::vector<Gradients<float>> unit_grads;

  LossLog log;
  std::vector<double> train_losses;
  std::size_t step = 0;
  std::size_t epochs_done = 0;
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    const auto start = std::chrono::steady_clock::now();
    const std::vector<RankingUnit> units = build_units(train_set, epoch, policy);
    if (units.empty()) throw std::invalid_argument("train: no ranking units could be formed from the training set");
    const auto batches = make_minibatches(units, cfg.batch_units);

    double loss_sum = 0.0;
    std::size_t unit_offset = 0;
    for (std::size_t b = 0; b < batches.size(); ++b) {
      const auto batch = batches[b];
      while (unit_grads.size() < batch.size()) unit_grads.push_back(zero_gradients(net));
      std::vector<double> unit_losses(batch.size());
      const float scale = 1.0f / static_cast<float>(batch.size());
      parallel_for(batch.size(), cfg.threads, [&](std::size_t i) {
        clear(unit_grads[i]);
        const std::uint64_t seed = derive_seed(cfg.seed, {0x7A1Bu, epoch, unit_offset + i});
        unit_losses[i] = run_unit(net, train_set, batch[i], side, crop, scale, seed, unit_grads[i]).loss;
      });
      for (std::size_t i = 0; i < batch.size(); ++i) {
        if (!std::isfinite(unit_losses[i])) {
          throw TrainingDiverged("non-finite loss in batch " + std::to_string(b) + " of epoch " +
                                 std::to_string(epoch + 1) + " (global step " + std::to_string(step) + ")");
        }
        loss_sum += unit_losses[i];
        add_into(grads, unit_grads[i]);
      }
      if (hooks.before_step) hooks.before_step(step, grads);
      sgd_momentum_step<float>(net.params(), grads, opt);
      clear(grads);
      if (hooks.after_step) hooks.after_step(step, grads);
      ++step;
      unit_offset += batch.size();
    }

    EpochRecord rec;
    rec.epoch = epoch + 1;
    rec.train_loss = loss_sum / static_cast<double>(units.size());
    rec.reference_count = policy.curriculum.reference_count(epoch);
    if (!heldout_set.empty()) {
      const auto held = build_units(heldout_set, 0, rec.reference_count, policy.cross_view_relaxed,
                                    derive_seed(policy.seed, {0x4E1Du}));
      if (!held.empty()) rec.heldout_loss = held_out_loss(net, heldout_set, held, side, cfg.threads);
    }
    rec.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    log.epochs.push_back(rec);
    train_losses.push_back(rec.train_loss);
    epochs_done = epoch + 1;

    if (cfg.snapshot_every && !cfg.snapshot_dir.empty() && epochs_done % cfg.snapshot_every == 0) {
      TrainingMeta meta{epochs_done, loss_digest(train_losses), cfg.seed, {}};
      save_checkpoint(net, cfg.snapshot_dir / ("snap_" + std::to_string(epochs_done) + ".drnk"), meta);
    }
    if (hooks.on_epoch_end && !hooks.on_epoch_end(rec, net)) break;
  }

  TrainingMeta meta;
  meta.epoch = epochs_done;
  meta.loss_digest = loss_digest(train_losses);
  meta.seed = cfg.seed;
  meta.extra["stitch_side"] = std::to_string(side);
  meta.extra["curriculum"] = curriculum_text(policy);
  meta.extra["cross_view_relaxed"] = policy.cross_view_relaxed ? "1" : "0";
  return {make_checkpoint(net, std::move(meta)), std::move(log)};
}

TrainResult fine_tune(const Checkpoint& pretrained, const NetworkConfig& expected,
                      std::span<const PersonImage> target_train_set, const TrainConfig& cfg,
                      const SamplerPolicy& policy, const TrainHooks& hooks, std::span<const PersonImage> heldout_set) {
  Network<float> net = network_from_checkpoint(pretrained, expected);
  return train(net, target_train_set, cfg, policy, hooks, heldout_set);
}

}  // namespace deeprank
