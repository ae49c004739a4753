#include "lgr/training.hpp"

#include "lgr/error.hpp"
#include "lgr/provenance.hpp"
#include "lgr/rng.hpp"

#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <limits>

namespace lgr::training {

void TrainConfig::validate() const {
  if (epochs < 1) throw Error("training.epochs must be >= 1");
  if (batch_size < 1) throw Error("training.batch_size must be >= 1");
  if (!(lr_end > 0.0) || !(lr_start >= lr_end)) throw Error("training: need lr_start >= lr_end > 0");
  if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0)) throw Error("training: betas must be in [0, 1)");
  if (!(epsilon > 0.0)) throw Error("training.epsilon must be positive");
  if (!(weight_decay >= 0.0)) throw Error("training.weight_decay must be >= 0");
  if (schedule != "linear") throw Error("training.schedule: only 'linear' is supported");
  if (loss != "cross_entropy") throw Error("training.loss: only 'cross_entropy' is supported");
  if (max_steps < 0) throw Error("training.max_steps must be >= 0");
}

void to_json(nlohmann::json& j, const TrainConfig& c) {
  j = {{"epochs", c.epochs},         {"batch_size", c.batch_size},     {"beta1", c.beta1},
       {"beta2", c.beta2},           {"epsilon", c.epsilon},           {"weight_decay", c.weight_decay},
       {"lr_start", c.lr_start},     {"lr_end", c.lr_end},             {"schedule", c.schedule},
       {"loss", c.loss},             {"seed", c.seed},                 {"max_steps", c.max_steps},
       {"normalize_raw", c.normalize_raw}};
}

void from_json(const nlohmann::json& j, TrainConfig& c) {
  TrainConfig d;
  c.epochs = j.value("epochs", d.epochs);
  c.batch_size = j.value("batch_size", d.batch_size);
  c.beta1 = j.value("beta1", d.beta1);
  c.beta2 = j.value("beta2", d.beta2);
  c.epsilon = j.value("epsilon", d.epsilon);
  c.weight_decay = j.value("weight_decay", d.weight_decay);
  c.lr_start = j.value("lr_start", d.lr_start);
  c.lr_end = j.value("lr_end", d.lr_end);
  c.schedule = j.value("schedule", d.schedule);
  c.loss = j.value("loss", d.loss);
  c.seed = j.value("seed", d.seed);
  c.max_steps = j.value("max_steps", d.max_steps);
  c.normalize_raw = j.value("normalize_raw", d.normalize_raw);
}

std::string TrainConfig::digest() const {
  nlohmann::json j = *this;
  return provenance::sha256_hex(j.dump());
}

double lr_at(long step, long total_steps, const TrainConfig& config) {
  if (total_steps < 1) throw Error("lr_at: total_steps must be >= 1");
  if (step < 0 || step > total_steps) throw Error(fmt::format("lr_at: step {} outside [0, {}]", step, total_steps));
  if (step == total_steps) return config.lr_end;
  const double f = static_cast<double>(step) / static_cast<double>(total_steps);
  return config.lr_start + (config.lr_end - config.lr_start) * f;
}

AdamW::AdamW(std::vector<nn::Parameter*> params, double beta1, double beta2, double epsilon, double weight_decay)
    : params_(std::move(params)), beta1_(beta1), beta2_(beta2), epsilon_(epsilon), weight_decay_(weight_decay) {
  for (auto* p : params_) {
    m_.emplace_back(static_cast<std::size_t>(p->value.numel()), 0.0);
    v_.emplace_back(static_cast<std::size_t>(p->value.numel()), 0.0);
  }
}

void AdamW::step(double lr) {
  ++t_;
  const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  for (std::size_t k = 0; k < params_.size(); ++k) {
    nn::Parameter& p = *params_[k];
    auto& m = m_[k];
    auto& v = v_[k];
    const double decay = p.decay ? lr * weight_decay_ : 0.0;
    double* w = p.value.data();
    const double* g = p.grad.data();
    for (std::size_t i = 0; i < m.size(); ++i) {
      m[i] = beta1_ * m[i] + (1.0 - beta1_) * g[i];
      v[i] = beta2_ * v[i] + (1.0 - beta2_) * g[i] * g[i];
      const double mhat = m[i] / bc1, vhat = v[i] / bc2;
      w[i] -= decay * w[i] + lr * mhat / (std::sqrt(vhat) + epsilon_);
    }
  }
}

Normalizer Normalizer::fit(const ClipStream& train) {
  Normalizer n;
  double lo = std::numeric_limits<double>::infinity(), hi = -lo;
  for (std::size_t i = 0; i < train.size(); ++i) {
    const Sample s = train.get(i);
    if (s.clip.kind != ClipKind::raw) continue;
    for (const Plane& f : s.clip.frames) {
      lo = std::min(lo, f.minCoeff());
      hi = std::max(hi, f.maxCoeff());
    }
  }
  if (std::isfinite(lo) && hi > lo) {
    n.enabled = true;
    n.lo = lo;
    n.hi = hi;
  }
  return n;
}

void to_json(nlohmann::json& j, const Normalizer& n) { j = {{"enabled", n.enabled}, {"lo", n.lo}, {"hi", n.hi}}; }

void from_json(const nlohmann::json& j, Normalizer& n) {
  n.enabled = j.at("enabled").get<bool>();
  n.lo = j.at("lo").get<double>();
  n.hi = j.at("hi").get<double>();
}

nn::Tensor batch_tensor(const std::vector<const VideoClip*>& clips, const Normalizer& norm) {
  if (clips.empty()) throw Error("batch_tensor: empty batch");
  const int L = clips.front()->length();
  const Size2 s = clips.front()->frame_size();
  nn::Tensor t({static_cast<int>(clips.size()), 1, L, s.height, s.width});
  double* out = t.data();
  for (const VideoClip* c : clips) {
    if (c->length() != L || c->frame_size() != s) throw Error("batch_tensor: clips differ in shape");
    const bool scale = c->kind == ClipKind::raw;
    for (const Plane& f : c->frames) {
      for (Eigen::Index i = 0; i < f.size(); ++i) *out++ = scale ? norm.apply(f.data()[i]) : f.data()[i];
    }
  }
  return t;
}

void write_history_csv(const std::filesystem::path& path, const TrainHistory& history) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  out << "epoch,train_loss,train_accuracy,val_accuracy,learning_rate,steps,best\n";
  for (const auto& e : history.epochs)
    out << fmt::format("{},{:.10g},{:.10g},{:.10g},{:.10g},{},{}\n", e.epoch, e.train_loss, e.train_accuracy,
                       e.val_accuracy, e.learning_rate, e.steps, e.epoch == history.best_epoch ? 1 : 0);
}

namespace {

void check_geometry(const models::ModelSpec& spec, const Sample& s) {
  const Size2 fs = s.clip.frame_size();
  if (s.clip.length() != spec.length || fs.height != spec.height || fs.width != spec.width)
    throw Error(fmt::format("geometry mismatch: clip {} is {}x{}x{}, model expects {}x{}x{}", s.source_id,
                            s.clip.length(), fs.height, fs.width, spec.length, spec.height, spec.width));
  if (!s.clip.label || *s.clip.label < 0 || *s.clip.label >= spec.num_classes)
    throw Error("clip " + s.source_id + " has no valid label");
}

std::vector<int> labels_of(const std::vector<Sample>& batch) {
  std::vector<int> out;
  for (const auto& s : batch) out.push_back(*s.clip.label);
  return out;
}

nn::Tensor to_tensor(const std::vector<Sample>& batch, const Normalizer& norm) {
  std::vector<const VideoClip*> clips;
  for (const auto& s : batch) clips.push_back(&s.clip);
  return batch_tensor(clips, norm);
}

}  // namespace

TrainResult train_classifier(const models::ModelSpec& spec, const ClipStream& train, const ClipStream& val,
                             const TrainConfig& config, const EpochCallback& on_epoch) {
  spec.validate();
  config.validate();
  if (!spec.is_classifier()) throw Error("train_classifier: model kind is not a classifier");
  if (train.size() == 0) throw Error("training stream is empty");
  if (val.size() == 0) throw Error("validation stream is empty");
  const auto t0 = std::chrono::steady_clock::now();

  auto model = models::build_model(spec, derive_seed(config.seed, "init"));
  const Normalizer norm = config.normalize_raw ? Normalizer::fit(train) : Normalizer{};
  AdamW opt(model->parameters(), config.beta1, config.beta2, config.epsilon, config.weight_decay);

  const long n = static_cast<long>(train.size());
  const long per_epoch = (n + config.batch_size - 1) / config.batch_size;
  long horizon = per_epoch * config.epochs;
  if (config.max_steps > 0) horizon = std::min(horizon, config.max_steps);

  TrainResult result;
  long step = 0;
  for (int epoch = 0; epoch < config.epochs && step < horizon; ++epoch) {
    Rng rng(derive_seed(config.seed, "epoch/" + std::to_string(epoch)));
    const std::vector<std::size_t> order = rng.permutation(static_cast<std::size_t>(n));
    double loss_sum = 0.0;
    long correct = 0, seen = 0;
    double lr = config.lr_start;
    for (long b = 0; b < per_epoch && step < horizon; ++b) {
      std::vector<Sample> batch;
      for (long i = b * config.batch_size; i < std::min(n, (b + 1) * config.batch_size); ++i) {
        batch.push_back(train.get(order[static_cast<std::size_t>(i)]));
        check_geometry(spec, batch.back());
      }
      const std::vector<int> labels = labels_of(batch);
      model->zero_grad();
      const nn::Tensor logits = model->forward(to_tensor(batch, norm), true);
      nn::Tensor grad;
      const double loss = nn::cross_entropy(logits, labels, &grad);
      if (!std::isfinite(loss))
        throw Error(fmt::format("non-finite loss {} at epoch {} step {} (lr {:.3g}); first clip {}", loss, epoch, step,
                                lr, batch.front().source_id));
      model->backward(grad);
      lr = lr_at(step, horizon, config);
      opt.step(lr);
      ++step;
      const long bs = static_cast<long>(batch.size());
      loss_sum += loss * static_cast<double>(bs);
      seen += bs;
      for (long i = 0; i < bs; ++i)
        if (nn::argmax_row(logits, static_cast<int>(i)) == labels[static_cast<std::size_t>(i)]) ++correct;
    }
    const EvalResult v = evaluate_model(*model, val, norm, config.batch_size);
    EpochRecord rec{epoch, loss_sum / static_cast<double>(seen),
                    static_cast<double>(correct) / static_cast<double>(seen), v.accuracy, lr, step};
    result.history.epochs.push_back(rec);
    if (result.history.best_epoch < 0 || v.accuracy > result.history.best_val_accuracy) {
      result.history.best_epoch = epoch;
      result.history.best_val_accuracy = v.accuracy;
      result.best = Checkpoint::capture(*model);
      result.best.train_config_digest = config.digest();
      result.best.best_val_accuracy = v.accuracy;
      result.best.metadata["normalizer"] = norm;
      result.best.metadata["epoch"] = epoch;
      result.best.metadata["train_config"] = config;
    }
    if (on_epoch && !on_epoch(rec)) break;
  }
  result.history.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  result.best.metadata["wall_seconds"] = result.history.wall_seconds;
  return result;
}

double EvalResult::illumination_accuracy(int illumination) const {
  auto it = per_illumination.find(illumination);
  if (it == per_illumination.end() || it->second.second == 0) return 0.0;
  return static_cast<double>(it->second.first) / static_cast<double>(it->second.second);
}

nlohmann::json eval_to_json(const EvalResult& r) {
  nlohmann::json illum = nlohmann::json::object();
  for (const auto& [k, v] : r.per_illumination)
    illum[std::to_string(k)] = {{"correct", v.first}, {"total", v.second}, {"accuracy", r.illumination_accuracy(k)}};
  nlohmann::json conf = nlohmann::json::array();
  for (const auto& row : r.confusion) conf.push_back(row);
  return {{"accuracy", r.accuracy}, {"correct", r.correct}, {"total", r.total},
          {"confusion", conf},      {"per_illumination", illum}};
}

EvalResult score_predictions(const std::vector<int>& truth, const std::vector<int>& predicted,
                             const std::vector<int>& illumination) {
  if (truth.empty()) throw Error("evaluation stream is empty");
  if (predicted.size() != truth.size() || illumination.size() != truth.size())
    throw Error("score_predictions: length mismatch");
  EvalResult r;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    const int t = truth[i], p = predicted[i];
    if (t < 0 || t >= kNumClasses || p < 0 || p >= kNumClasses) throw Error("score_predictions: label out of range");
    ++r.confusion[static_cast<std::size_t>(t)][static_cast<std::size_t>(p)];
    auto& il = r.per_illumination[illumination[i]];
    ++il.second;
    if (t == p) {
      ++r.correct;
      ++il.first;
    }
  }
  r.total = static_cast<long>(truth.size());
  r.accuracy = static_cast<double>(r.correct) / static_cast<double>(r.total);
  r.predictions = predicted;
  return r;
}

EvalResult evaluate_predictor(const ClipStream& stream, const std::function<int(const Sample&)>& predictor) {
  std::vector<int> truth, pred, illum;
  for (std::size_t i = 0; i < stream.size(); ++i) {
    const Sample s = stream.get(i);
    if (!s.clip.label) throw Error("evaluation clip " + s.source_id + " is unlabeled");
    truth.push_back(*s.clip.label);
    pred.push_back(predictor(s));
    illum.push_back(s.illumination);
  }
  return score_predictions(truth, pred, illum);
}

EvalResult evaluate_model(models::Model& model, const ClipStream& stream, const Normalizer& norm, int batch_size) {
  if (stream.size() == 0) throw Error("evaluation stream is empty");
  if (batch_size < 1) throw Error("evaluate_model: batch_size must be >= 1");
  std::vector<int> truth, pred, illum;
  const std::size_t n = stream.size();
  for (std::size_t start = 0; start < n; start += static_cast<std::size_t>(batch_size)) {
    std::vector<Sample> batch;
    for (std::size_t i = start; i < std::min(n, start + static_cast<std::size_t>(batch_size)); ++i) {
      batch.push_back(stream.get(i));
      check_geometry(model.spec(), batch.back());
    }
    const nn::Tensor logits = model.forward(to_tensor(batch, norm), false);
    for (std::size_t i = 0; i < batch.size(); ++i) {
      truth.push_back(*batch[i].clip.label);
      pred.push_back(nn::argmax_row(logits, static_cast<int>(i)));
      illum.push_back(batch[i].illumination);
    }
  }
  return score_predictions(truth, pred, illum);
}

Normalizer normalizer_of(const Checkpoint& ckpt) {
  if (ckpt.metadata.contains("normalizer")) return ckpt.metadata.at("normalizer").get<Normalizer>();
  return {};
}

EvalResult evaluate_checkpoint(const Checkpoint& ckpt, const ClipStream& stream, int batch_size) {
  auto model = ckpt.instantiate();
  return evaluate_model(*model, stream, normalizer_of(ckpt), batch_size);
}

// --- Restorer -----------------------------------------------------------------

namespace {

nn::Tensor frames_tensor(const std::vector<const Plane*>& frames, const Normalizer& norm) {
  const Size2 s = size_of(*frames.front());
  nn::Tensor t({static_cast<int>(frames.size()), 1, 1, s.height, s.width});
  double* out = t.data();
  for (const Plane* f : frames) {
    if (size_of(*f) != s) throw Error("restorer: frames differ in size");
    for (Eigen::Index i = 0; i < f->size(); ++i) *out++ = norm.apply(f->data()[i]);
  }
  return t;
}

Normalizer fit_frames(const std::vector<FramePair>& pairs) {
  Normalizer n;
  double lo = std::numeric_limits<double>::infinity(), hi = -lo;
  for (const auto& p : pairs) {
    lo = std::min(lo, p.input.minCoeff());
    hi = std::max(hi, p.input.maxCoeff());
  }
  if (hi > lo) {
    n.enabled = true;
    n.lo = lo;
    n.hi = hi;
  }
  return n;
}

double mse_and_grad(const nn::Tensor& y, const nn::Tensor& target, nn::Tensor* grad) {
  const double inv = 1.0 / static_cast<double>(y.numel());
  double sum = 0.0;
  if (grad) *grad = nn::Tensor(y.shape());
  for (long i = 0; i < y.numel(); ++i) {
    const double d = y[i] - target[i];
    sum += d * d;
    if (grad) (*grad)[i] = 2.0 * d * inv;
  }
  return sum * inv;
}

}  // namespace

RestorerResult train_restorer(const models::ModelSpec& spec, const std::vector<FramePair>& pairs,
                              const TrainConfig& config) {
  spec.validate();
  config.validate();
  if (spec.kind != models::ModelKind::unet_restorer) throw Error("train_restorer: model kind must be unet_restorer");
  if (pairs.empty()) throw Error("train_restorer: no training pairs");
  for (const auto& p : pairs)
    if (size_of(p.input) != Size2{spec.height, spec.width} || size_of(p.target) != Size2{spec.height, spec.width})
      throw Error("geometry mismatch between restorer spec and training pairs");

  auto model = models::build_model(spec, derive_seed(config.seed, "init"));
  const Normalizer norm = fit_frames(pairs);
  AdamW opt(model->parameters(), config.beta1, config.beta2, config.epsilon, config.weight_decay);
  const long n = static_cast<long>(pairs.size());
  const long per_epoch = (n + config.batch_size - 1) / config.batch_size;
  long horizon = per_epoch * config.epochs;
  if (config.max_steps > 0) horizon = std::min(horizon, config.max_steps);

  RestorerResult result;
  long step = 0;
  for (int epoch = 0; epoch < config.epochs && step < horizon; ++epoch) {
    Rng rng(derive_seed(config.seed, "restorer-epoch/" + std::to_string(epoch)));
    const auto order = rng.permutation(static_cast<std::size_t>(n));
    double loss_sum = 0.0;
    long seen = 0;
    for (long b = 0; b < per_epoch && step < horizon; ++b) {
      std::vector<const Plane*> in, tgt;
      for (long i = b * config.batch_size; i < std::min(n, (b + 1) * config.batch_size); ++i) {
        const auto& p = pairs[order[static_cast<std::size_t>(i)]];
        in.push_back(&p.input);
        tgt.push_back(&p.target);
      }
      model->zero_grad();
      const nn::Tensor y = model->forward(frames_tensor(in, norm), true);
      nn::Tensor grad;
      const double loss = mse_and_grad(y, frames_tensor(tgt, Normalizer{}), &grad);
      if (!std::isfinite(loss)) throw Error(fmt::format("non-finite restorer loss at epoch {} step {}", epoch, step));
      model->backward(grad);
      opt.step(lr_at(step, horizon, config));
      ++step;
      loss_sum += loss * static_cast<double>(in.size());
      seen += static_cast<long>(in.size());
    }
    result.epoch_loss.push_back(loss_sum / static_cast<double>(seen));
  }
  result.model = Checkpoint::capture(*model);
  result.model.train_config_digest = config.digest();
  result.model.metadata["normalizer"] = norm;
  result.model.metadata["train_config"] = config;
  result.model.metadata["final_train_mse"] = result.epoch_loss.empty() ? 0.0 : result.epoch_loss.back();
  return result;
}

double restorer_mse(const Checkpoint& ckpt, const std::vector<FramePair>& pairs) {
  if (pairs.empty()) throw Error("restorer_mse: no pairs");
  auto model = ckpt.instantiate();
  const Normalizer norm = normalizer_of(ckpt);
  double total = 0.0;
  long count = 0;
  for (const auto& p : pairs) {
    const nn::Tensor y = model->forward(frames_tensor({&p.input}, norm), false);
    total += mse_and_grad(y, frames_tensor({&p.target}, Normalizer{}), nullptr) * static_cast<double>(y.numel());
    count += y.numel();
  }
  return total / static_cast<double>(count);
}

VideoClip restore_clip(models::Model& model, const VideoClip& raw, const Normalizer& norm) {
  if (model.spec().kind != models::ModelKind::unet_restorer) throw Error("restore_clip: model is not a restorer");
  std::vector<const Plane*> frames;
  for (const Plane& f : raw.frames) frames.push_back(&f);
  if (frames.empty()) throw Error("restore_clip: empty clip");
  const nn::Tensor y = model.forward(frames_tensor(frames, norm), false);
  VideoClip out;
  out.kind = ClipKind::reconstructed;
  out.label = raw.label;
  const Size2 s = raw.frame_size();
  const long frame = static_cast<long>(s.height) * s.width;
  for (int i = 0; i < raw.length(); ++i) {
    Plane p(s.height, s.width);
    std::copy(y.data() + i * frame, y.data() + (i + 1) * frame, p.data());
    out.frames.push_back(std::move(p));
  }
  return out;
}

}  // namespace lgr::training
