#include "t4c/train.hpp"

#include <chrono>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <sstream>

namespace t4c {

void TrainConfig::validate() const {
  if (epochs < 0) throw ConfigError("epochs must be >= 0");
  if (warm_up_epochs < 0) throw ConfigError("warm_up_epochs must be >= 0");
  if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate)) throw ConfigError("learning rate must be finite and >= 0");
  if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0)) throw ConfigError("Adam betas must lie in [0, 1)");
  if (!(eps > 0.0)) throw ConfigError("Adam eps must be positive");
}

template <class T>
OptimizerState<T> make_optimizer(OptimizerKind kind, const std::map<std::string, Tensor<T>>& params) {
  OptimizerState<T> opt;
  opt.kind = kind;
  for (const auto& [name, p] : params) {
    opt.first.emplace(name, Tensor<T>(p.shape()));
    if (kind == OptimizerKind::Adam) opt.second.emplace(name, Tensor<T>(p.shape()));
  }
  return opt;
}

namespace {

template <class T>
const Tensor<T>& grad_for(const std::map<std::string, Tensor<T>>& grads, const std::string& name, const Tensor<T>& p,
                          std::int64_t step) {
  auto it = grads.find(name);
  if (it == grads.end()) throw ShapeError("optimizer: no gradient for '" + name + "'");
  if (it->second.shape() != p.shape()) throw ShapeError("optimizer: gradient of '" + name + "' has the wrong shape");
  for (T g : it->second.data()) {
    if (!std::isfinite(static_cast<double>(g))) throw DivergenceError("non-finite gradient for '" + name + "'", step);
  }
  return it->second;
}

}  // namespace

template <class T>
std::map<std::string, Tensor<T>> adam_step(const std::map<std::string, Tensor<T>>& params,
                                           const std::map<std::string, Tensor<T>>& grads, OptimizerState<T>& opt,
                                           double lr, double beta1, double beta2, double eps) {
  const std::int64_t t = opt.step + 1;
  const double c1 = 1.0 - std::pow(beta1, static_cast<double>(t));
  const double c2 = 1.0 - std::pow(beta2, static_cast<double>(t));
  std::map<std::string, Tensor<T>> out;
  std::map<std::string, Tensor<T>> m_next, v_next;
  for (const auto& [name, p] : params) {
    const auto& g = grad_for(grads, name, p, t);
    const auto m0 = opt.first.at(name).data();
    const auto v0 = opt.second.at(name).data();
    Tensor<T> np(p.shape()), m(p.shape()), v(p.shape());
    auto pd = p.data();
    auto gd = g.data();
    auto npd = np.mutable_data();
    auto md = m.mutable_data();
    auto vd = v.mutable_data();
    for (std::size_t i = 0; i < pd.size(); ++i) {
      const double gi = gd[i];
      const double mi = beta1 * m0[i] + (1.0 - beta1) * gi;
      const double vi = beta2 * v0[i] + (1.0 - beta2) * gi * gi;
      md[i] = static_cast<T>(mi);
      vd[i] = static_cast<T>(vi);
      const double update = lr * (mi / c1) / (std::sqrt(vi / c2) + eps);
      npd[i] = static_cast<T>(pd[i] - update);
    }
    out.emplace(name, std::move(np));
    m_next.emplace(name, std::move(m));
    v_next.emplace(name, std::move(v));
  }
  opt.first = std::move(m_next);
  opt.second = std::move(v_next);
  opt.step = t;
  return out;
}

template <class T>
std::map<std::string, Tensor<T>> sgd_step(const std::map<std::string, Tensor<T>>& params,
                                          const std::map<std::string, Tensor<T>>& grads, OptimizerState<T>& opt,
                                          double lr, double momentum) {
  const std::int64_t t = opt.step + 1;
  std::map<std::string, Tensor<T>> out, vel;
  for (const auto& [name, p] : params) {
    const auto& g = grad_for(grads, name, p, t);
    const auto v0 = opt.first.at(name).data();
    Tensor<T> np(p.shape()), v(p.shape());
    auto pd = p.data();
    auto gd = g.data();
    auto npd = np.mutable_data();
    auto vd = v.mutable_data();
    for (std::size_t i = 0; i < pd.size(); ++i) {
      const double vi = momentum * v0[i] + static_cast<double>(gd[i]);
      vd[i] = static_cast<T>(vi);
      npd[i] = static_cast<T>(pd[i] - lr * vi);
    }
    out.emplace(name, std::move(np));
    vel.emplace(name, std::move(v));
  }
  opt.first = std::move(vel);
  opt.step = t;
  return out;
}

std::string metrics_csv(const std::vector<MetricsRecord>& rows, std::uint64_t seed, const std::string& mode) {
  std::ostringstream os;
  os << "epoch,step,city,train_mse,wall_seconds,batches_per_second,nnz_rate\n";
  os << std::setprecision(9);
  for (const auto& r : rows) {
    os << r.epoch << ',' << r.step << ',' << r.city << ',' << r.train_mse << ',' << r.wall_seconds << ','
       << r.batches_per_second << ',' << r.nnz_rate << '\n';
  }
  os << "# seed=" << seed << ", mode=" << mode << '\n';
  return os.str();
}

void write_metrics_csv(const std::string& path, const std::vector<MetricsRecord>& rows, std::uint64_t seed,
                       const std::string& mode) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("cannot create " + path);
  out << metrics_csv(rows, seed, mode);
  if (!out) throw std::runtime_error("write failed on " + path);
}

namespace {

std::uint64_t epoch_seed(std::uint64_t seed, int epoch) {
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ull * static_cast<std::uint64_t>(epoch + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

}  // namespace

EpochSource manifest_source(std::shared_ptr<const Manifest> manifest, SamplerConfig sampler, LoaderOptions loader,
                            std::uint64_t seed, std::size_t max_batches_per_epoch) {
  loader.max_batches = max_batches_per_epoch;
  return [=](int epoch) -> BatchFeed {
    const auto plan = plan_epoch(*manifest, sampler, epoch_seed(seed, epoch));
    std::shared_ptr<BatchStream> stream = iterate_batches(*manifest, sampler, plan, loader);
    return [stream, manifest]() { return stream->next(); };
  };
}

EpochSource fixed_source(std::vector<Batch> batches) {
  auto shared = std::make_shared<const std::vector<Batch>>(std::move(batches));
  return [shared](int) -> BatchFeed {
    auto pos = std::make_shared<std::size_t>(0);
    return [shared, pos]() -> std::optional<Batch> {
      if (*pos >= shared->size()) return std::nullopt;
      return (*shared)[(*pos)++];
    };
  };
}

TrainResult train(const ModelConfig& model, const TrainConfig& cfg, const EpochSource& source,
                  std::optional<ModelState<float>> init, int first_epoch) {
  cfg.validate();
  TrainResult res;
  ModelState<float> state = init ? std::move(*init) : init_model<float>(model, cfg.seed);
  auto opt = make_optimizer(cfg.optimizer, state.params);
  res.best = state;
  res.best_mse = std::numeric_limits<double>::infinity();
  using Clock = std::chrono::steady_clock;

  for (int e = 0; e < cfg.epochs; ++e) {
    const int epoch = first_epoch + e;
    struct Acc {
      double loss = 0.0, nnz = 0.0;
      std::size_t batches = 0;
    };
    std::map<std::string, Acc> per_city;
    Acc all;
    const auto t0 = Clock::now();
    auto feed = source(epoch);
    while (auto batch = feed()) {
      const auto lg = loss_and_grads(state, batch->input, batch->target);
      if (!std::isfinite(lg.loss)) throw DivergenceError("non-finite loss", state.step + 1);
      state.params = cfg.optimizer == OptimizerKind::Adam
                         ? adam_step(state.params, lg.grads, opt, cfg.learning_rate, cfg.beta1, cfg.beta2, cfg.eps)
                         : sgd_step(state.params, lg.grads, opt, cfg.learning_rate, cfg.momentum);
      ++state.step;
      res.step_losses.push_back(lg.loss);
      const double nnz = batch_nnz_rate(batch->input);
      for (Acc* a : {&all, &per_city[batch->cities.empty() ? "all" : batch->cities.front()]}) {
        a->loss += lg.loss;
        a->nnz += nnz;
        ++a->batches;
      }
    }
    const double secs = std::chrono::duration<double>(Clock::now() - t0).count();
    auto row = [&](const std::string& city, const Acc& a) {
      MetricsRecord r;
      r.epoch = epoch + 1;
      r.step = state.step;
      r.city = city;
      r.train_mse = a.batches ? a.loss / a.batches : 0.0;
      r.nnz_rate = a.batches ? a.nnz / a.batches : 0.0;
      if (!cfg.deterministic) {
        r.wall_seconds = secs;
        r.batches_per_second = secs > 0 ? all.batches / secs : 0.0;
      }
      return r;
    };
    res.metrics.push_back(row("all", all));
    if (per_city.size() > 1 || (per_city.size() == 1 && per_city.begin()->first != "all")) {
      for (const auto& [city, a] : per_city) res.metrics.push_back(row(city, a));
    }
    const double mean = all.batches ? all.loss / all.batches : std::numeric_limits<double>::infinity();
    if (mean < res.best_mse) {
      res.best_mse = mean;
      res.best = state;
    }
  }
  if (cfg.epochs == 0) res.best_mse = 0.0;
  res.last = std::move(state);
  return res;
}

WarmUpResult warm_up_train(const ModelConfig& model, const TrainConfig& cfg, const EpochSource& source) {
  WarmUpResult out;
  if (cfg.warm_up_epochs == 0) {
    out.phase2 = train(model, cfg, source);
    out.combined = out.phase2;
    out.swapped = out.phase2.best;
    return out;
  }
  if (model.kind != ModelKind::ResNet || model.output_mode != OutputMode::Sequential) {
    throw ConfigError("warm-up training needs a sequential-output ResNet, got " + model_name(model));
  }
  ModelConfig warm = model;
  warm.output_mode = OutputMode::ConvOutput;
  TrainConfig c1 = cfg;
  c1.epochs = cfg.warm_up_epochs;
  out.phase1 = train(warm, c1, source);
  out.swapped = warm_up_swap(out.phase1.last);
  out.phase2 = train(model, cfg, source, out.swapped, cfg.warm_up_epochs);

  out.combined.metrics = out.phase1.metrics;
  out.combined.metrics.insert(out.combined.metrics.end(), out.phase2.metrics.begin(), out.phase2.metrics.end());
  out.combined.step_losses = out.phase1.step_losses;
  out.combined.step_losses.insert(out.combined.step_losses.end(), out.phase2.step_losses.begin(),
                                  out.phase2.step_losses.end());
  // Only sequential-head states are returned as the model.
  out.combined.best = cfg.epochs > 0 ? out.phase2.best : out.swapped;
  out.combined.best_mse = out.phase2.best_mse;
  out.combined.last = out.phase2.last;
  return out;
}

EvalResult evaluate(const ModelState<float>& state, const BatchFeed& feed) {
  const int horizon = state.config.horizon;
  std::vector<double> frame_sum(horizon, 0.0);
  std::vector<double> frame_n(horizon, 0.0);
  std::map<std::string, std::pair<double, double>> city;
  EvalResult res;
  while (auto batch = feed()) {
    const auto pred = predict(state, batch->input);
    require_same_shape(pred.shape(), batch->target.shape(), "evaluate prediction/target");
    const auto p = pred.data();
    const auto y = batch->target.data();
    const std::int64_t B = pred.dim(0), C = pred.dim(1), F = pred.dim(2), plane = pred.dim(3) * pred.dim(4);
    for (std::int64_t b = 0; b < B; ++b) {
      double sample = 0.0;
      for (std::int64_t c = 0; c < C; ++c) {
        for (std::int64_t f = 0; f < F; ++f) {
          const std::int64_t base = ((b * C + c) * F + f) * plane;
          double s = 0.0;
          for (std::int64_t i = 0; i < plane; ++i) {
            const double d = static_cast<double>(p[base + i]) - static_cast<double>(y[base + i]);
            s += d * d;
          }
          frame_sum[f] += s;
          frame_n[f] += static_cast<double>(plane);
          sample += s;
        }
      }
      auto& cc = city[batch->cities.at(static_cast<std::size_t>(b))];
      cc.first += sample;
      cc.second += static_cast<double>(C * F * plane);
    }
    ++res.batches;
  }
  if (res.batches == 0) throw ConfigError("evaluate: no batches");
  double total = 0.0, count = 0.0;
  for (int f = 0; f < horizon; ++f) {
    res.per_frame.push_back(frame_sum[f] / frame_n[f]);
    total += frame_sum[f];
    count += frame_n[f];
  }
  res.mse = total / count;
  for (const auto& [name, sc] : city) res.per_city[name] = sc.first / sc.second;
  return res;
}

#define T4C_INSTANTIATE(T)                                                                                      \
  template OptimizerState<T> make_optimizer(OptimizerKind, const std::map<std::string, Tensor<T>>&);            \
  template std::map<std::string, Tensor<T>> adam_step(const std::map<std::string, Tensor<T>>&,                 \
                                                      const std::map<std::string, Tensor<T>>&, OptimizerState<T>&, \
                                                      double, double, double, double);                          \
  template std::map<std::string, Tensor<T>> sgd_step(const std::map<std::string, Tensor<T>>&,                  \
                                                     const std::map<std::string, Tensor<T>>&, OptimizerState<T>&, \
                                                     double, double);

T4C_INSTANTIATE(float)
T4C_INSTANTIATE(double)
#undef T4C_INSTANTIATE

}  // namespace t4c
