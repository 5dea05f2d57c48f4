#include "safa/fscil.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <numeric>
#include <sstream>

#include "safa/errors.hpp"
#include "safa/hash.hpp"

namespace safa {

Tensor PrototypeBank::classifier() const {
  const auto B = base.rows();
  const auto D = base.cols();
  Tensor out({B + fused.size(), D});
  std::copy(base.data().begin(), base.data().end(), out.data().begin());
  for (std::size_t i = 0; i < fused.size(); ++i)
    std::copy(fused[i].data().begin(), fused[i].data().end(), out.row(B + i).begin());
  return out;
}

void TrainConfig::validate() const {
  if (epochs < 1) throw ConfigError("optimizer.epochs", "must be >= 1");
  if (batch < 1) throw ConfigError("optimizer.batch", "must be >= 1");
  if (!(lr > 0.0)) throw ConfigError("optimizer.lr", "must be positive");
  if (!(rate_ema >= 0.0 && rate_ema < 1.0)) throw ConfigError("optimizer.rate_ema", "must lie in [0, 1)");
  loss.validate();
  zo.validate();
}

namespace {

std::size_t readout_argmax(const Tensor& readout) {
  const auto T = readout.rows();
  const auto C = readout.cols();
  std::vector<double> avg(C, 0.0);
  for (std::size_t t = 0; t < T; ++t)
    for (std::size_t c = 0; c < C; ++c) avg[c] += readout.at(t, c);
  return static_cast<std::size_t>(std::max_element(avg.begin(), avg.end()) - avg.begin());
}

}  // namespace

TrainLog train_base(SpikingNetwork& net, const Tensor& x, std::span<const std::size_t> labels, const TrainConfig& cfg,
                    RngStream& shuffle_rng, RngStream& zo_rng, std::vector<Tensor>* base_rates) {
  cfg.validate();
  if (x.size() == 0 || labels.empty()) throw DimensionError("train_base: empty training set");
  const auto n = x.rows();
  if (labels.size() != n) throw DimensionError("train_base: labels/inputs length mismatch");
  for (auto y : labels)
    if (y >= net.classes())
      throw DimensionError("train_base: label " + std::to_string(y) + " outside [0, " +
                           std::to_string(net.classes()) + ")");

  const auto batch = std::min(cfg.batch, n);
  const auto T = cfg.loss.timesteps;
  AdamState adam;
  adam.lr = cfg.lr;
  TrainLog log;
  std::vector<std::size_t> perm(n);
  std::vector<Tensor> ema;
  std::size_t correct = 0;

  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::iota(perm.begin(), perm.end(), std::size_t{0});
    for (std::size_t i = n; i > 1; --i) std::swap(perm[i - 1], perm[shuffle_rng.next_below(i)]);
    const bool final_epoch = epoch + 1 == cfg.epochs;
    double epoch_loss = 0.0;
    std::size_t batches = 0;
    for (std::size_t start = 0; start < n; start += batch, ++batches) {
      const auto stop = std::min(n, start + batch);
      const std::span<const std::size_t> idx(perm.data() + start, stop - start);
      const Tensor xb = gather_rows(x, idx);
      std::vector<std::size_t> yb;
      for (auto i : idx) yb.push_back(labels[i]);

      const auto tape = record_forward(net, xb, yb, cfg.loss);
      if (!std::isfinite(tape.loss_value))
        throw DivergenceError("non-finite loss at epoch " + std::to_string(epoch) + ", batch " +
                              std::to_string(batches));
      auto grads = backward(net, tape, cfg.zo, zo_rng, cfg.backward);
      for (const auto& g : grads)
        if (!g.all_finite())
          throw DivergenceError("non-finite gradient at epoch " + std::to_string(epoch) + ", batch " +
                                std::to_string(batches));
      epoch_loss += tape.loss_value;

      if (final_epoch) {
        // Batch firing rates feed the base-rate moving average.
        std::vector<Tensor> rates;
        for (const auto& layer : net.hidden) rates.emplace_back(Shape{layer.neurons()});
        for (const auto& s : tape.samples) {
          for (std::size_t l = 0; l < s.layers.size(); ++l)
            for (std::size_t t = 0; t < T; ++t) {
              const auto row = s.layers[l].spikes.row(t);
              for (std::size_t j = 0; j < row.size(); ++j) rates[l][j] += row[j];
            }
          correct += readout_argmax(s.readout) == s.label;
        }
        const double denom = static_cast<double>(tape.samples.size() * T);
        for (auto& r : rates)
          for (auto& v : r.data()) v /= denom;
        if (ema.empty()) {
          ema = std::move(rates);
        } else {
          for (std::size_t l = 0; l < ema.size(); ++l)
            for (std::size_t j = 0; j < ema[l].size(); ++j)
              ema[l][j] = cfg.rate_ema * ema[l][j] + (1.0 - cfg.rate_ema) * rates[l][j];
        }
      }

      auto params = net.parameters();
      adam_step(params, grads, adam);
    }
    log.epoch_loss.push_back(epoch_loss / static_cast<double>(batches));
  }
  log.train_accuracy = static_cast<double>(correct) / static_cast<double>(n);
  if (base_rates) *base_rates = std::move(ema);
  return log;
}

double readout_accuracy(const SpikingNetwork& net, std::size_t timesteps, const Tensor& x,
                        std::span<const std::size_t> labels, std::span<const std::size_t> rows) {
  if (rows.empty()) throw DimensionError("readout_accuracy: empty sample set");
  std::size_t correct = 0;
  for (auto i : rows) correct += readout_argmax(forward_sample(net, x.row(i), timesteps).readout) == labels[i];
  return static_cast<double>(correct) / static_cast<double>(rows.size());
}

Tensor prototypes_from_features(const Tensor& features, std::span<const std::size_t> labels,
                                std::span<const std::size_t> classes) {
  const auto n = features.rows();
  const auto D = features.cols();
  if (labels.size() != n) throw DimensionError("prototypes: labels/features length mismatch");
  if (classes.empty()) throw DimensionError("prototypes: no classes requested");
  Tensor out({classes.size(), D});
  for (std::size_t k = 0; k < classes.size(); ++k) {
    auto row = out.row(k);
    std::size_t count = 0;
    for (std::size_t i = 0; i < n; ++i) {
      if (labels[i] != classes[k]) continue;
      const auto f = features.row(i);
      for (std::size_t d = 0; d < D; ++d) row[d] += f[d];
      ++count;
    }
    if (count == 0) throw MissingClassError("class " + std::to_string(classes[k]) + " has no samples");
    for (auto& v : row) v /= static_cast<double>(count);
    if (!(l2_norm(row) > 0.0))
      throw DegenerateError("class " + std::to_string(classes[k]) + " has an all-zero mean feature");
  }
  return normalize_rows(out);
}

Tensor extract_prototypes(const SpikingNetwork& net, std::size_t timesteps, const Tensor& x,
                          std::span<const std::size_t> labels, std::span<const std::size_t> classes) {
  const auto n = x.rows();
  Tensor feats({n, net.feature_dim()});
  for (std::size_t i = 0; i < n; ++i) {
    const auto f = features(forward_sample(net, x.row(i), timesteps));
    std::copy(f.data().begin(), f.data().end(), feats.row(i).begin());
  }
  return prototypes_from_features(feats, labels, classes);
}

Tensor base_projector(const Tensor& base, double jitter) {
  const auto B = base.rows();
  const auto D = base.cols();
  if (B > D)
    throw DimensionError("base_projector: " + std::to_string(B) + " base prototypes exceed feature dim " +
                         std::to_string(D));
  const Tensor gram = matmul(base, base.transpose());
  Tensor coef;
  try {
    coef = spd_solve(gram, base, jitter);
  } catch (const SingularMatrixError& e) {
    std::ostringstream os;
    os << "base prototypes are linearly dependent (leading minor " << e.leading_minor() << ")";
    bool any = false;
    for (std::size_t i = 0; i < B; ++i)
      for (std::size_t j = i + 1; j < B; ++j) {
        double c = 0.0;
        try {
          c = cosine_similarity(base.row(i), base.row(j));
        } catch (const DegenerateError&) {
          continue;
        }
        if (c > 0.9999) {
          os << (any ? ", " : "; near-duplicate rows: ") << '(' << i << ", " << j << ')';
          any = true;
        }
      }
    throw SingularMatrixError(os.str(), e.leading_minor());
  }
  Tensor g = matmul(base.transpose(), coef);
  for (std::size_t i = 0; i < D; ++i)
    for (std::size_t j = i + 1; j < D; ++j) {
      const double s = 0.5 * (g.at(i, j) + g.at(j, i));
      g.at(i, j) = s;
      g.at(j, i) = s;
    }
  return g;
}

Tensor fuse_prototypes(const Tensor& novel, const Tensor& projector, double alpha, std::size_t first_class,
                       Tensor* raw) {
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw ConfigError("fscil.alpha", "must lie in [0, 1]");
  const auto D = novel.cols();
  if (projector.rows() != D || projector.cols() != D)
    throw DimensionError("fuse_prototypes: projector " + shape_string(projector.shape()) +
                         " does not match feature dim " + std::to_string(D));
  const Tensor proj = matmul(novel, projector);
  Tensor mixed({novel.rows(), D});
  for (std::size_t i = 0; i < mixed.size(); ++i) mixed[i] = (1.0 - alpha) * novel[i] + alpha * proj[i];
  if (raw) *raw = mixed;
  for (std::size_t r = 0; r < mixed.rows(); ++r)
    if (!(l2_norm(mixed.row(r)) > 1e-10))
      throw DegenerateError("fused prototype for class " + std::to_string(first_class + r) +
                            " has zero norm (novel prototype orthogonal to the base subspace)");
  return normalize_rows(mixed);
}

std::vector<Tensor> mean_layer_rates(const SpikingNetwork& net, std::size_t timesteps, const Tensor& x,
                                     std::span<const std::size_t> rows) {
  std::vector<std::size_t> all;
  if (rows.empty()) {
    all.resize(x.rows());
    std::iota(all.begin(), all.end(), std::size_t{0});
    rows = all;
  }
  std::vector<Tensor> rates;
  for (const auto& l : net.hidden) rates.emplace_back(Shape{l.neurons()});
  for (auto i : rows) {
    const auto tr = forward_sample(net, x.row(i), timesteps);
    for (std::size_t l = 0; l < tr.layers.size(); ++l)
      for (std::size_t t = 0; t < timesteps; ++t) {
        const auto s = tr.layers[l].spikes.row(t);
        for (std::size_t j = 0; j < s.size(); ++j) rates[l][j] += s[j];
      }
  }
  const double denom = static_cast<double>(rows.size() * timesteps);
  for (auto& r : rates)
    for (auto& v : r.data()) v /= denom;
  return rates;
}

namespace {

double stable_gap(const SpikingNetwork& net, const std::vector<Tensor>& rates, const std::vector<Tensor>& base) {
  double sum = 0.0;
  std::size_t n = 0;
  for (std::size_t l = 0; l < net.hidden.size(); ++l)
    for (std::size_t j = 0; j < rates[l].size(); ++j)
      if (net.hidden[l].mask.bits[j] == 0.0) {
        sum += std::abs(rates[l][j] - base[l][j]);
        ++n;
      }
  return n ? sum / static_cast<double>(n) : 0.0;
}

}  // namespace

std::vector<double> adapt_thresholds_incremental(SpikingNetwork& net, std::size_t timesteps,
                                                 const std::vector<Tensor>& base_rates, const Tensor& support,
                                                 const ThresholdPolicy& policy) {
  policy.adapt.validate();
  if (support.size() == 0) throw DimensionError("adapt_thresholds: empty support set");
  if (base_rates.size() != net.hidden.size())
    throw CheckpointMismatchError("adapt_thresholds: base rates missing for some layers");
  for (std::size_t l = 0; l < net.hidden.size(); ++l)
    if (base_rates[l].size() != net.hidden[l].neurons())
      throw CheckpointMismatchError("adapt_thresholds: base rate size mismatch in layer " + std::to_string(l));

  std::vector<double> gaps;
  auto rates = mean_layer_rates(net, timesteps, support);
  gaps.push_back(stable_gap(net, rates, base_rates));
  for (int pass = 0; pass < policy.adapt.passes; ++pass) {
    for (std::size_t l = 0; l < net.hidden.size(); ++l) {
      auto& layer = net.hidden[l];
      const Tensor a = adaptation_matrix(layer.mask, policy.adapt);
      layer.thresholds = update_thresholds(layer.thresholds, a, rates[l], base_rates[l], policy.sign);
      if (policy.floor)
        for (auto& th : layer.thresholds.data()) th = std::max(th, *policy.floor);
    }
    rates = mean_layer_rates(net, timesteps, support);
    gaps.push_back(stable_gap(net, rates, base_rates));
  }
  return gaps;
}

Classification classify(std::span<const double> feature, const Tensor& classifier) {
  if (classifier.size() == 0 || classifier.rows() == 0) throw DimensionError("classify: empty prototype bank");
  if (!(l2_norm(feature) > 0.0)) throw DegenerateError("classify: feature vector is all zero");
  Classification best{-1, -2.0};
  for (std::size_t r = 0; r < classifier.rows(); ++r) {
    const double s = cosine_similarity(feature, classifier.row(r));
    if (s > best.similarity) best = {static_cast<long>(r), s};
  }
  return best;
}

Evaluation evaluate(const SpikingNetwork& net, std::size_t timesteps, const PrototypeBank& bank, const Tensor& x,
                    std::span<const std::size_t> labels, std::span<const std::size_t> rows, std::size_t base_classes) {
  if (rows.empty()) throw DimensionError("evaluate: empty test set");
  const Tensor cls = bank.classifier();
  Evaluation ev;
  const auto L = net.hidden.size();
  ev.spikes_per_layer.assign(L, 0.0);
  ev.neuron_steps_per_layer.assign(L, 0.0);
  for (auto i : rows) {
    const auto tr = forward_sample(net, x.row(i), timesteps);
    for (std::size_t l = 0; l < L; ++l) {
      for (double v : tr.layers[l].spikes.data()) ev.spikes_per_layer[l] += v;
      ev.neuron_steps_per_layer[l] += static_cast<double>(tr.layers[l].spikes.size());
    }
    const Tensor f = features(tr);
    ev.sample_ids.push_back(i);
    ev.labels.push_back(labels[i]);
    if (!(l2_norm(f.data()) > 0.0)) {
      ev.predictions.push_back(-1);
      ev.similarity.push_back(0.0);
      ++ev.metrics.abstained;
      continue;
    }
    const auto c = classify(f.data(), cls);
    ev.predictions.push_back(c.label);
    ev.similarity.push_back(c.similarity);
  }
  auto& m = ev.metrics;
  m.samples = rows.size();
  m.classes_seen = bank.classes();
  m.accuracy = session_accuracy(ev.predictions, ev.labels);
  m.breakdown = confusion_breakdown(ev.predictions, ev.labels, base_classes);
  const auto& b = m.breakdown;
  m.base_accuracy = (b.cbn + b.mbn) ? static_cast<double>(b.cbn) / static_cast<double>(b.cbn + b.mbn) : 0.0;
  if (b.cnn + b.mnn) {
    m.novel_accuracy = static_cast<double>(b.cnn) / static_cast<double>(b.cnn + b.mnn);
    m.hacc = harmonic_accuracy(m.base_accuracy, *m.novel_accuracy);
  }
  const auto sp = sparsity_report(ev.spikes_per_layer, ev.neuron_steps_per_layer);
  m.layer_rates = sp.layer_rates;
  m.mean_rate = sp.global_rate;
  return ev;
}

std::uint64_t weights_hash(const SpikingNetwork& net) {
  std::uint64_t h = kFnvOffset;
  for (const auto* p : net.parameters()) {
    const auto d = p->data();
    h = fnv1a(std::span(reinterpret_cast<const std::uint8_t*>(d.data()), d.size_bytes()), h);
  }
  return h;
}

void finish_base_session(ModelCheckpoint& ckpt, const FscilStream& stream, double alpha, double jitter) {
  const Tensor xb = gather_rows(stream.data.train_x, stream.base.train);
  std::vector<std::size_t> yb;
  for (auto i : stream.base.train) yb.push_back(stream.data.train_y[i]);
  ckpt.bank = PrototypeBank{};
  ckpt.bank.base = extract_prototypes(ckpt.net, ckpt.timesteps, xb, yb, stream.base.classes);
  ckpt.bank.projector = base_projector(ckpt.bank.base, jitter);
  ckpt.bank.alpha = alpha;
  ckpt.session = 0;
}

RunOutput run_incremental(ModelCheckpoint ckpt, const FscilStream& stream, const FscilConfig& cfg) {
  validate_stream(stream);
  const auto B = stream.base.classes.size();
  if (ckpt.bank.base.rows() != B || ckpt.net.classes() != B)
    throw CheckpointMismatchError("checkpoint has " + std::to_string(ckpt.bank.base.rows()) +
                                  " base classes, stream has " + std::to_string(B));
  if (ckpt.net.input_dim() != stream.data.feature_dim())
    throw CheckpointMismatchError("checkpoint expects " + std::to_string(ckpt.net.input_dim()) +
                                  " input features, stream has " + std::to_string(stream.data.feature_dim()));
  if (ckpt.session != 0) throw CheckpointMismatchError("checkpoint is not a base-session checkpoint");
  if (!(cfg.alpha >= 0.0 && cfg.alpha <= 1.0)) throw ConfigError("fscil.alpha", "must lie in [0, 1]");
  ckpt.bank.alpha = cfg.alpha;

  RunOutput out;
  const auto T = ckpt.timesteps;
  const auto& data = stream.data;
  std::vector<std::size_t> seen_test = stream.base.test;

  auto run_eval = [&](std::size_t session) {
    auto ev = evaluate(ckpt.net, T, ckpt.bank, data.test_x, data.test_y, seen_test, B);
    ev.metrics.session = session;
    out.results.sessions.push_back(ev.metrics);
    out.weight_hashes.push_back(weights_hash(ckpt.net));
    out.evaluations.push_back(std::move(ev));
  };

  run_eval(0);
  for (std::size_t s = 0; s < stream.incremental.size(); ++s) {
    const auto& sess = stream.incremental[s];
    const Tensor support = gather_rows(data.train_x, sess.train);
    std::vector<std::size_t> ys;
    for (auto i : sess.train) ys.push_back(data.train_y[i]);

    const Tensor novel = extract_prototypes(ckpt.net, T, support, ys, sess.classes);
    if (cfg.thresholds.adapt.passes > 0)
      adapt_thresholds_incremental(ckpt.net, T, ckpt.base_rates, support, cfg.thresholds);
    Tensor raw;
    const Tensor fused = fuse_prototypes(novel, ckpt.bank.projector, cfg.alpha, sess.classes.front(), &raw);
    for (std::size_t r = 0; r < novel.rows(); ++r) {
      ckpt.bank.novel.push_back(Tensor::vector({novel.row(r).begin(), novel.row(r).end()}));
      ckpt.bank.fused_raw.push_back(Tensor::vector({raw.row(r).begin(), raw.row(r).end()}));
      ckpt.bank.fused.push_back(Tensor::vector({fused.row(r).begin(), fused.row(r).end()}));
    }
    seen_test.insert(seen_test.end(), sess.test.begin(), sess.test.end());
    run_eval(s + 1);
  }

  // Spike-driven layers only: the first layer sees the analog input.
  const auto& last = out.evaluations.back();
  const auto L = ckpt.net.hidden.size();
  for (std::size_t l = 1; l <= L; ++l) {
    LayerCostProfile p;
    const bool readout = l == L;
    p.layer = readout ? "readout" : "hidden" + std::to_string(l);
    p.kind = LayerKind::dense;
    const auto in = readout ? ckpt.net.readout_weights.rows() : ckpt.net.hidden[l].inputs();
    const auto outd = readout ? ckpt.net.readout_weights.cols() : ckpt.net.hidden[l].neurons();
    p.flops = static_cast<double>(flops_of_dense(in, outd));
    p.zeta = last.neuron_steps_per_layer[l - 1] > 0.0
                 ? last.spikes_per_layer[l - 1] / last.neuron_steps_per_layer[l - 1]
                 : 0.0;
    p.timesteps = T;
    out.energy_profiles.push_back(p);
  }

  ckpt.session = stream.incremental.size();
  out.results.seed = stream.seed;
  out.results.config_fingerprint = ckpt.fingerprint;
  out.final_state = std::move(ckpt);
  return out;
}

ModelCheckpoint train_base_checkpoint(const FscilStream& stream, const FscilExperiment& exp, TrainLog* log) {
  NetworkConfig ncfg = exp.network;
  ncfg.input_dim = stream.data.feature_dim();
  ncfg.classes = stream.base.classes.size();
  RngStream init_rng(exp.seed, streams::kInit);
  RngStream mask_rng(exp.seed, streams::kMask);
  RngStream shuffle_rng = RngStream(exp.seed, streams::kData).fork(1);
  RngStream zo_rng(exp.seed, streams::kZo);

  ModelCheckpoint ckpt;
  ckpt.net = SpikingNetwork::create(ncfg, init_rng, mask_rng);
  ckpt.timesteps = exp.train.loss.timesteps;
  const Tensor xb = gather_rows(stream.data.train_x, stream.base.train);
  std::vector<std::size_t> yb;
  for (auto i : stream.base.train) yb.push_back(stream.data.train_y[i]);
  auto l = train_base(ckpt.net, xb, yb, exp.train, shuffle_rng, zo_rng, &ckpt.base_rates);
  finish_base_session(ckpt, stream, exp.fscil.alpha, exp.fscil.projector_jitter);
  if (log) *log = std::move(l);
  return ckpt;
}

RunOutput run_fscil(const FscilStream& stream, const FscilExperiment& exp) {
  validate_stream(stream);
  return run_incremental(train_base_checkpoint(stream, exp), stream, exp.fscil);
}

}  // namespace safa
