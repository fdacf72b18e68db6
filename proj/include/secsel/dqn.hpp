#pragma once

#include <algorithm>
#include <array>
#include <cassert>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <span>
#include <string>
#include <vector>

#include "secsel/common.hpp"
#include "secsel/rng.hpp"

namespace secsel {

enum class NetMode { Train, Eval };

inline constexpr double kBnEps = 1e-5;
inline constexpr double kBnMomentum = 0.1;  // running = (1-m)*running + m*batch
inline constexpr std::uint32_t kCheckpointFormatVersion = 1;
inline constexpr char kCheckpointMagic[4] = {'S', 'L', 'Q', 'N'};

// Multilayer perceptron Q-function. Hidden layers run
// linear -> batch norm -> dropout -> ReLU; the output layer is linear.
// Templated on the scalar so tests can instantiate a double network for
// finite-difference gradient checks while production uses float32 (which
// then round-trips bit-exactly through checkpoints).
template <class S>
struct QNetT {
  struct Layer {
    int in = 0;
    int out = 0;
    std::vector<S> w;  // out x in, row-major
    std::vector<S> b;  // out
    bool hidden = false;
    std::vector<S> bn_gamma, bn_beta, bn_mean, bn_var;  // hidden layers only
  };

  std::vector<int> dims;
  std::vector<Layer> layers;
  double dropout_rate = 0.2;
  // When false, batch statistics are never computed and the (identity)
  // batch-norm parameters stay frozen; the affine op still runs so that a
  // network behaves the same before and after a checkpoint round-trip.
  bool batch_norm = true;
  std::uint32_t obs_layout_version = 1;

  int input_dim() const { return dims.front(); }
  int output_dim() const { return dims.back(); }
};

using QNetwork = QNetT<float>;

template <class S>
QNetT<S> make_qnet(std::vector<int> dims, double dropout_rate, bool batch_norm,
                   std::uint32_t obs_layout_version, Rng& rng) {
  if (dims.size() < 2) throw config_error("network needs at least input and output dims");
  for (int d : dims) {
    if (d < 1) throw config_error("network layer dims must be >= 1");
  }
  if (dropout_rate < 0.0 || dropout_rate >= 1.0) throw config_error("dropout rate must be in [0, 1)");
  QNetT<S> net;
  net.dims = std::move(dims);
  net.dropout_rate = dropout_rate;
  net.batch_norm = batch_norm;
  net.obs_layout_version = obs_layout_version;
  for (std::size_t l = 0; l + 1 < net.dims.size(); ++l) {
    typename QNetT<S>::Layer layer;
    layer.in = net.dims[l];
    layer.out = net.dims[l + 1];
    layer.hidden = l + 2 < net.dims.size();
    layer.w.resize(static_cast<std::size_t>(layer.in) * static_cast<std::size_t>(layer.out));
    layer.b.assign(static_cast<std::size_t>(layer.out), S(0));
    const double limit = std::sqrt(6.0 / layer.in);  // He-uniform
    for (auto& w : layer.w) w = static_cast<S>(rng.uniform(-limit, limit));
    if (layer.hidden) {
      layer.bn_gamma.assign(static_cast<std::size_t>(layer.out), S(1));
      layer.bn_beta.assign(static_cast<std::size_t>(layer.out), S(0));
      layer.bn_mean.assign(static_cast<std::size_t>(layer.out), S(0));
      layer.bn_var.assign(static_cast<std::size_t>(layer.out), S(1));
    }
    net.layers.push_back(std::move(layer));
  }
  return net;
}

inline QNetwork make_qnetwork(int obs_len, int n_actions, double dropout_rate, bool batch_norm,
                              std::uint32_t obs_layout_version, Rng& rng) {
  return make_qnet<float>({obs_len, 128, 64, n_actions}, dropout_rate, batch_norm,
                          obs_layout_version, rng);
}

// ---------------------------------------------------------------------------
// Forward / backward

template <class S>
struct ForwardCache {
  struct LayerCache {
    std::vector<S> z;        // B x out, pre-normalization
    std::vector<S> xhat;     // B x out, normalized
    std::vector<S> mean;     // out (stats used, batch or running)
    std::vector<S> invstd;   // out
    std::vector<S> drop;     // B x out dropout multipliers; empty when inactive
    std::vector<S> a;        // B x out, post-ReLU (input to the next layer)
    bool used_batch_stats = false;
  };
  std::vector<S> input;  // B x dims[0]
  std::vector<LayerCache> hidden;
  std::vector<S> q;  // B x out_dim
  std::size_t batch = 0;
};

namespace detail {

template <class S>
void linear_forward(const typename QNetT<S>::Layer& L, const S* x, std::size_t batch, S* y) {
  for (std::size_t b = 0; b < batch; ++b) {
    const S* xb = x + b * static_cast<std::size_t>(L.in);
    S* yb = y + b * static_cast<std::size_t>(L.out);
    for (int o = 0; o < L.out; ++o) {
      const S* wr = L.w.data() + static_cast<std::size_t>(o) * static_cast<std::size_t>(L.in);
      S acc = L.b[static_cast<std::size_t>(o)];
      for (int i = 0; i < L.in; ++i) acc += wr[i] * xb[i];
      yb[o] = acc;
    }
  }
}

}  // namespace detail

// Batched forward pass. Train mode uses batch statistics (updating the
// running ones) and applies dropout; eval mode is deterministic. `rng` is
// required only for train-mode dropout.
template <class S>
ForwardCache<S> forward_batch(QNetT<S>& net, std::span<const S> input, std::size_t batch,
                              NetMode mode, Rng* rng) {
  if (input.size() != batch * static_cast<std::size_t>(net.input_dim())) {
    throw structural_error("forward: input size does not match batch x input_dim");
  }
  ForwardCache<S> cache;
  cache.batch = batch;
  cache.input.assign(input.begin(), input.end());
  const S* x = cache.input.data();

  for (std::size_t l = 0; l + 1 < net.layers.size(); ++l) {
    auto& L = net.layers[l];
    const auto out = static_cast<std::size_t>(L.out);
    typename ForwardCache<S>::LayerCache lc;
    lc.z.resize(batch * out);
    detail::linear_forward<S>(L, x, batch, lc.z.data());

    lc.mean.resize(out);
    lc.invstd.resize(out);
    lc.used_batch_stats = mode == NetMode::Train && net.batch_norm;
    if (lc.used_batch_stats) {
      if (batch < 2) throw contract_error("train-mode batch norm needs batch >= 2");
      for (std::size_t j = 0; j < out; ++j) {
        S mu = S(0);
        for (std::size_t b = 0; b < batch; ++b) mu += lc.z[b * out + j];
        mu /= static_cast<S>(batch);
        S var = S(0);
        for (std::size_t b = 0; b < batch; ++b) {
          const S d = lc.z[b * out + j] - mu;
          var += d * d;
        }
        var /= static_cast<S>(batch);  // biased, used for normalization
        lc.mean[j] = mu;
        lc.invstd[j] = S(1) / std::sqrt(var + static_cast<S>(kBnEps));
        const S unbiased = var * static_cast<S>(batch) / static_cast<S>(batch - 1);
        L.bn_mean[j] = static_cast<S>((1.0 - kBnMomentum)) * L.bn_mean[j] +
                       static_cast<S>(kBnMomentum) * mu;
        L.bn_var[j] = static_cast<S>((1.0 - kBnMomentum)) * L.bn_var[j] +
                      static_cast<S>(kBnMomentum) * unbiased;
      }
    } else {
      for (std::size_t j = 0; j < out; ++j) {
        lc.mean[j] = L.bn_mean[j];
        lc.invstd[j] = S(1) / std::sqrt(L.bn_var[j] + static_cast<S>(kBnEps));
      }
    }

    lc.xhat.resize(batch * out);
    lc.a.resize(batch * out);
    const bool use_dropout = mode == NetMode::Train && net.dropout_rate > 0.0;
    if (use_dropout) {
      if (rng == nullptr) throw contract_error("train-mode dropout needs an RNG");
      lc.drop.resize(batch * out);
    }
    const S keep_scale = static_cast<S>(1.0 / (1.0 - net.dropout_rate));
    for (std::size_t b = 0; b < batch; ++b) {
      for (std::size_t j = 0; j < out; ++j) {
        const std::size_t k = b * out + j;
        const S xh = (lc.z[k] - lc.mean[j]) * lc.invstd[j];
        lc.xhat[k] = xh;
        S y = L.bn_gamma[j] * xh + L.bn_beta[j];
        if (use_dropout) {
          const S mult = rng->bernoulli(net.dropout_rate) ? S(0) : keep_scale;
          lc.drop[k] = mult;
          y *= mult;
        }
        lc.a[k] = y > S(0) ? y : S(0);
      }
    }
    cache.hidden.push_back(std::move(lc));
    x = cache.hidden.back().a.data();
  }

  const auto& out_layer = net.layers.back();
  cache.q.resize(batch * static_cast<std::size_t>(out_layer.out));
  detail::linear_forward<S>(out_layer, x, batch, cache.q.data());
  return cache;
}

// Eval-mode convenience: deterministic, never touches running stats.
template <class S>
std::vector<S> forward(const QNetT<S>& net, std::span<const S> obs, NetMode mode = NetMode::Eval) {
  if (mode == NetMode::Train) {
    throw contract_error("single-observation forward must run in eval mode");
  }
  auto& mutable_net = const_cast<QNetT<S>&>(net);  // eval path never mutates
  auto cache = forward_batch<S>(mutable_net, obs, 1, NetMode::Eval, nullptr);
  return std::move(cache.q);
}

template <class S>
struct Gradients {
  struct LayerGrad {
    std::vector<S> w, b, gamma, beta;
  };
  std::vector<LayerGrad> layers;
};

// Backpropagate dL/dQ through the cached forward pass.
template <class S>
Gradients<S> backward_batch(const QNetT<S>& net, const ForwardCache<S>& cache,
                            std::span<const S> dq) {
  const std::size_t batch = cache.batch;
  Gradients<S> grads;
  grads.layers.resize(net.layers.size());
  for (std::size_t l = 0; l < net.layers.size(); ++l) {
    const auto& L = net.layers[l];
    grads.layers[l].w.assign(L.w.size(), S(0));
    grads.layers[l].b.assign(L.b.size(), S(0));
    if (L.hidden) {
      grads.layers[l].gamma.assign(L.bn_gamma.size(), S(0));
      grads.layers[l].beta.assign(L.bn_beta.size(), S(0));
    }
  }

  auto layer_input = [&](std::size_t l) -> const S* {
    return l == 0 ? cache.input.data() : cache.hidden[l - 1].a.data();
  };

  // output layer
  std::vector<S> dx;  // gradient w.r.t. the current layer's input
  {
    const std::size_t l = net.layers.size() - 1;
    const auto& L = net.layers[l];
    const auto out = static_cast<std::size_t>(L.out);
    const auto in = static_cast<std::size_t>(L.in);
    const S* x = layer_input(l);
    auto& g = grads.layers[l];
    dx.assign(batch * in, S(0));
    for (std::size_t b = 0; b < batch; ++b) {
      const S* dzb = dq.data() + b * out;
      const S* xb = x + b * in;
      S* dxb = dx.data() + b * in;
      for (std::size_t o = 0; o < out; ++o) {
        const S d = dzb[o];
        if (d == S(0)) continue;
        g.b[o] += d;
        S* gw = g.w.data() + o * in;
        const S* wr = L.w.data() + o * in;
        for (std::size_t i = 0; i < in; ++i) {
          gw[i] += d * xb[i];
          dxb[i] += d * wr[i];
        }
      }
    }
  }

  for (std::size_t li = net.layers.size() - 1; li-- > 0;) {
    const auto& L = net.layers[li];
    const auto& lc = cache.hidden[li];
    const auto out = static_cast<std::size_t>(L.out);
    const auto in = static_cast<std::size_t>(L.in);
    auto& g = grads.layers[li];

    // dx currently holds dL/da for this layer; walk back through
    // ReLU -> dropout -> batch norm to get dL/dz.
    std::vector<S> dz(batch * out, S(0));
    std::vector<S> s1(out, S(0)), s2(out, S(0));
    for (std::size_t b = 0; b < batch; ++b) {
      for (std::size_t j = 0; j < out; ++j) {
        const std::size_t k = b * out + j;
        S d = dx[k];
        if (lc.a[k] <= S(0)) d = S(0);           // ReLU
        if (!lc.drop.empty()) d *= lc.drop[k];   // dropout
        g.gamma[j] += d * lc.xhat[k];
        g.beta[j] += d;
        const S dxhat = d * L.bn_gamma[j];
        dz[k] = dxhat;  // temporarily dxhat
        s1[j] += dxhat;
        s2[j] += dxhat * lc.xhat[k];
      }
    }
    if (lc.used_batch_stats) {
      const S invb = S(1) / static_cast<S>(batch);
      for (std::size_t b = 0; b < batch; ++b) {
        for (std::size_t j = 0; j < out; ++j) {
          const std::size_t k = b * out + j;
          dz[k] = lc.invstd[j] * (dz[k] - s1[j] * invb - lc.xhat[k] * s2[j] * invb);
        }
      }
    } else {
      for (std::size_t b = 0; b < batch; ++b) {
        for (std::size_t j = 0; j < out; ++j) {
          dz[b * out + j] *= lc.invstd[j];
        }
      }
    }

    const S* x = layer_input(li);
    std::vector<S> dx_prev(batch * in, S(0));
    for (std::size_t b = 0; b < batch; ++b) {
      const S* dzb = dz.data() + b * out;
      const S* xb = x + b * in;
      S* dxb = dx_prev.data() + b * in;
      for (std::size_t o = 0; o < out; ++o) {
        const S d = dzb[o];
        if (d == S(0)) continue;
        g.b[o] += d;
        S* gw = g.w.data() + o * in;
        const S* wr = L.w.data() + o * in;
        for (std::size_t i = 0; i < in; ++i) {
          gw[i] += d * xb[i];
          dxb[i] += d * wr[i];
        }
      }
    }
    dx = std::move(dx_prev);
  }
  return grads;
}

// ---------------------------------------------------------------------------
// Adam

template <class S>
struct AdamState {
  struct Moments {
    std::vector<S> m, v;
  };
  struct LayerMoments {
    Moments w, b, gamma, beta;
  };
  std::vector<LayerMoments> layers;
  std::int64_t step = 0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

template <class S>
AdamState<S> make_adam(const QNetT<S>& net) {
  AdamState<S> st;
  st.layers.resize(net.layers.size());
  for (std::size_t l = 0; l < net.layers.size(); ++l) {
    const auto& L = net.layers[l];
    st.layers[l].w.m.assign(L.w.size(), S(0));
    st.layers[l].w.v.assign(L.w.size(), S(0));
    st.layers[l].b.m.assign(L.b.size(), S(0));
    st.layers[l].b.v.assign(L.b.size(), S(0));
    if (L.hidden) {
      st.layers[l].gamma.m.assign(L.bn_gamma.size(), S(0));
      st.layers[l].gamma.v.assign(L.bn_gamma.size(), S(0));
      st.layers[l].beta.m.assign(L.bn_beta.size(), S(0));
      st.layers[l].beta.v.assign(L.bn_beta.size(), S(0));
    }
  }
  return st;
}

namespace detail {

template <class S>
void adam_tensor(std::vector<S>& param, const std::vector<S>& grad,
                 typename AdamState<S>::Moments& mo, double lr, double b1, double b2, double eps,
                 double bias1, double bias2) {
  for (std::size_t i = 0; i < param.size(); ++i) {
    const double g = static_cast<double>(grad[i]);
    const double m = b1 * static_cast<double>(mo.m[i]) + (1.0 - b1) * g;
    const double v = b2 * static_cast<double>(mo.v[i]) + (1.0 - b2) * g * g;
    mo.m[i] = static_cast<S>(m);
    mo.v[i] = static_cast<S>(v);
    const double mhat = m / bias1;
    const double vhat = v / bias2;
    param[i] -= static_cast<S>(lr * mhat / (std::sqrt(vhat) + eps));
  }
}

}  // namespace detail

template <class S>
void adam_update(QNetT<S>& net, const Gradients<S>& grads, AdamState<S>& state, double lr) {
  ++state.step;
  const double bias1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step));
  const double bias2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step));
  for (std::size_t l = 0; l < net.layers.size(); ++l) {
    auto& L = net.layers[l];
    auto& G = grads.layers[l];
    auto& M = state.layers[l];
    detail::adam_tensor<S>(L.w, G.w, M.w, lr, state.beta1, state.beta2, state.eps, bias1, bias2);
    detail::adam_tensor<S>(L.b, G.b, M.b, lr, state.beta1, state.beta2, state.eps, bias1, bias2);
    if (L.hidden && net.batch_norm) {
      detail::adam_tensor<S>(L.bn_gamma, G.gamma, M.gamma, lr, state.beta1, state.beta2, state.eps, bias1, bias2);
      detail::adam_tensor<S>(L.bn_beta, G.beta, M.beta, lr, state.beta1, state.beta2, state.eps, bias1, bias2);
    }
  }
}

template <class S>
bool all_finite(const QNetT<S>& net) {
  auto ok = [](const std::vector<S>& v) {
    return std::all_of(v.begin(), v.end(), [](S x) { return std::isfinite(static_cast<double>(x)); });
  };
  for (const auto& L : net.layers) {
    if (!ok(L.w) || !ok(L.b)) return false;
    if (L.hidden && (!ok(L.bn_gamma) || !ok(L.bn_beta) || !ok(L.bn_mean) || !ok(L.bn_var))) return false;
  }
  return true;
}

// ---------------------------------------------------------------------------
// Replay buffer and TD training

struct Transition {
  std::vector<float> obs;
  int action = 0;
  float reward = 0.0f;
  std::vector<float> next_obs;           // empty for terminal transitions
  bool done = false;
  std::vector<std::uint8_t> next_mask;   // valid actions in the next state
};

class ReplayBuffer {
 public:
  explicit ReplayBuffer(std::size_t capacity) : capacity_(capacity) {
    if (capacity == 0) throw config_error("replay buffer capacity must be > 0");
  }

  std::size_t size() const { return data_.size(); }
  std::size_t capacity() const { return capacity_; }

  void push(Transition t) {
    if (data_.size() < capacity_) {
      data_.push_back(std::move(t));
    } else {
      data_[next_] = std::move(t);
      next_ = (next_ + 1) % capacity_;
    }
  }

  const Transition& operator[](std::size_t i) const { return data_[i]; }

  // Uniform without replacement within a batch.
  std::vector<std::size_t> sample(std::size_t batch, Rng& rng) const {
    if (batch > data_.size()) throw contract_error("replay sample larger than buffer");
    return rng.sample_indices(data_.size(), batch);
  }

 private:
  std::size_t capacity_;
  std::size_t next_ = 0;
  std::vector<Transition> data_;
};

struct TrainConfig {
  double gamma = 0.99;
  double learning_rate = 1e-3;
  int batch_size = 64;
  int buffer_capacity = 50000;
  double epsilon_start = 1.0;
  double epsilon_end = 0.05;
  int epsilon_decay_steps = 10000;
  int target_sync_period = 500;  // in train steps
  int train_period = 1;          // env steps between gradient steps
  double dropout = 0.2;
  bool batch_norm = true;

  void validate() const {
    if (gamma < 0.0 || gamma >= 1.0) throw config_error("gamma must be in [0, 1)");
    if (!(learning_rate > 0.0)) throw config_error("learning_rate must be > 0");
    if (batch_size < 2) throw config_error("batch_size must be >= 2");
    if (buffer_capacity < batch_size) throw config_error("buffer_capacity must be >= batch_size");
    if (epsilon_end > epsilon_start) throw config_error("epsilon_end must be <= epsilon_start");
    if (epsilon_start < 0.0 || epsilon_start > 1.0 || epsilon_end < 0.0) {
      throw config_error("epsilon schedule out of range");
    }
    if (epsilon_decay_steps < 1) throw config_error("epsilon_decay_steps must be >= 1");
    if (target_sync_period < 1) throw config_error("target_sync_period must be >= 1");
    if (train_period < 1) throw config_error("train_period must be >= 1");
    if (dropout < 0.0 || dropout >= 1.0) throw config_error("dropout must be in [0, 1)");
  }
};

inline double epsilon_at(const TrainConfig& cfg, std::int64_t env_step) {
  const double frac = std::min(1.0, static_cast<double>(env_step) / cfg.epsilon_decay_steps);
  return cfg.epsilon_start + (cfg.epsilon_end - cfg.epsilon_start) * frac;
}

// TD targets: r for terminal transitions, else r + γ max over the next
// state's *valid* actions of the target network's Q-values.
template <class S>
std::vector<S> td_targets(const ReplayBuffer& buffer, std::span<const std::size_t> indices,
                          const QNetT<S>& target_net, double gamma) {
  std::vector<S> targets(indices.size());
  // batch the non-terminal next observations through the target network
  std::vector<S> next_batch;
  std::vector<std::size_t> next_rows(indices.size(), static_cast<std::size_t>(-1));
  const auto in = static_cast<std::size_t>(target_net.input_dim());
  std::size_t n_next = 0;
  for (std::size_t i = 0; i < indices.size(); ++i) {
    const auto& t = buffer[indices[i]];
    if (!t.done) next_rows[i] = n_next++;
  }
  next_batch.resize(n_next * in);
  for (std::size_t i = 0; i < indices.size(); ++i) {
    if (next_rows[i] == static_cast<std::size_t>(-1)) continue;
    const auto& t = buffer[indices[i]];
    if (t.next_obs.size() != in) throw structural_error("transition next_obs arity mismatch");
    for (std::size_t j = 0; j < in; ++j) {
      next_batch[next_rows[i] * in + j] = static_cast<S>(t.next_obs[j]);
    }
  }
  std::vector<S> next_q;
  if (n_next > 0) {
    auto& mutable_net = const_cast<QNetT<S>&>(target_net);  // eval forward never mutates
    next_q = forward_batch<S>(mutable_net, next_batch, n_next, NetMode::Eval, nullptr).q;
  }
  const auto out = static_cast<std::size_t>(target_net.output_dim());
  for (std::size_t i = 0; i < indices.size(); ++i) {
    const auto& t = buffer[indices[i]];
    if (t.done) {
      targets[i] = static_cast<S>(t.reward);
      continue;
    }
    if (t.next_mask.size() != out) throw structural_error("transition next_mask arity mismatch");
    const S* q = next_q.data() + next_rows[i] * out;
    bool seen = false;
    S best = S(0);
    for (std::size_t a = 0; a < out; ++a) {
      if (t.next_mask[a] == 0) continue;
      if (!seen || q[a] > best) {
        best = q[a];
        seen = true;
      }
    }
    if (!seen) throw structural_error("transition next_mask admits no action");
    targets[i] = static_cast<S>(t.reward) + static_cast<S>(gamma) * best;
  }
  return targets;
}

// One gradient step on the mean squared TD error. Returns the pre-step loss.
template <class S>
double train_step(QNetT<S>& net, const QNetT<S>& target_net, const ReplayBuffer& buffer,
                  const TrainConfig& cfg, AdamState<S>& adam, Rng& rng) {
  if (buffer.size() < static_cast<std::size_t>(cfg.batch_size)) {
    throw contract_error("train_step: buffer smaller than batch size");
  }
  const auto indices = buffer.sample(static_cast<std::size_t>(cfg.batch_size), rng);
  const auto targets = td_targets<S>(buffer, indices, target_net, cfg.gamma);

  const auto in = static_cast<std::size_t>(net.input_dim());
  const auto out = static_cast<std::size_t>(net.output_dim());
  const std::size_t B = indices.size();
  std::vector<S> obs(B * in);
  for (std::size_t i = 0; i < B; ++i) {
    const auto& t = buffer[indices[i]];
    if (t.obs.size() != in) throw structural_error("transition obs arity mismatch");
    for (std::size_t j = 0; j < in; ++j) obs[i * in + j] = static_cast<S>(t.obs[j]);
  }

  auto cache = forward_batch<S>(net, obs, B, NetMode::Train, &rng);
  double loss = 0.0;
  std::vector<S> dq(B * out, S(0));
  for (std::size_t i = 0; i < B; ++i) {
    const int a = buffer[indices[i]].action;
    if (a < 0 || a >= static_cast<int>(out)) throw structural_error("transition action out of range");
    const double delta = static_cast<double>(cache.q[i * out + static_cast<std::size_t>(a)]) -
                         static_cast<double>(targets[i]);
    loss += delta * delta;
    dq[i * out + static_cast<std::size_t>(a)] = static_cast<S>(2.0 * delta / static_cast<double>(B));
  }
  loss /= static_cast<double>(B);

  const auto grads = backward_batch<S>(net, cache, dq);
  adam_update<S>(net, grads, adam, cfg.learning_rate);
  assert(all_finite(net) && "network parameters must stay finite");
  return loss;
}

// ε-greedy over the mask-valid actions; invalid entries never win.
template <class S>
int select_action(const QNetT<S>& net, std::span<const S> obs, std::span<const std::uint8_t> mask,
                  double epsilon, Rng& rng) {
  if (mask.size() != static_cast<std::size_t>(net.output_dim())) {
    throw structural_error("select_action: mask arity does not match network output");
  }
  std::vector<int> valid;
  for (std::size_t i = 0; i < mask.size(); ++i) {
    if (mask[i] != 0) valid.push_back(static_cast<int>(i));
  }
  if (valid.empty()) throw contract_error("select_action: mask admits no action");
  // greedy (epsilon 0) consumes no randomness, keeping matched validation
  // seed chains aligned across runs with different episode lengths
  if (epsilon > 0.0 && rng.u01() < epsilon) {
    return valid[static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(valid.size()) - 1))];
  }
  const auto q = forward<S>(net, obs);
  int best = valid.front();
  for (int a : valid) {
    if (q[static_cast<std::size_t>(a)] > q[static_cast<std::size_t>(best)]) best = a;
  }
  return best;
}

template <class S>
void sync_target(const QNetT<S>& net, QNetT<S>& target_net) {
  target_net = net;  // parameters and running stats alike
}

// ---------------------------------------------------------------------------
// Checkpoints
//
// Binary little-endian layout: magic "SLQN", format version u32, obs-layout
// version u32, layer count u32, dims u32[count+1], then per layer the
// weights, biases and (hidden layers) batch-norm scale/shift/running
// mean/variance as float32 row-major, closed by a CRC32 of all prior bytes.

namespace detail {

inline std::uint32_t crc32(const unsigned char* data, std::size_t len) {
  static const auto table = [] {
    std::array<std::uint32_t, 256> t{};
    for (std::uint32_t i = 0; i < 256; ++i) {
      std::uint32_t c = i;
      for (int k = 0; k < 8; ++k) c = (c & 1) ? 0xEDB88320u ^ (c >> 1) : c >> 1;
      t[i] = c;
    }
    return t;
  }();
  std::uint32_t crc = 0xFFFFFFFFu;
  for (std::size_t i = 0; i < len; ++i) {
    crc = table[(crc ^ data[i]) & 0xFFu] ^ (crc >> 8);
  }
  return crc ^ 0xFFFFFFFFu;
}

struct ByteWriter {
  std::vector<unsigned char> bytes;

  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) bytes.push_back(static_cast<unsigned char>((v >> (8 * i)) & 0xFFu));
  }
  void f32(float v) {
    std::uint32_t bits;
    std::memcpy(&bits, &v, 4);
    u32(bits);
  }
};

struct ByteReader {
  const std::vector<unsigned char>& bytes;
  std::size_t pos = 0;

  bool eof(std::size_t need) const { return pos + need > bytes.size(); }
  std::uint32_t u32() {
    if (eof(4)) throw parse_error("checkpoint: truncated file");
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(bytes[pos++]) << (8 * i);
    return v;
  }
  float f32() {
    const std::uint32_t bits = u32();
    float v;
    std::memcpy(&v, &bits, 4);
    return v;
  }
};

}  // namespace detail

template <class S>
void save_checkpoint(const QNetT<S>& net, const std::string& path) {
  detail::ByteWriter w;
  for (char c : kCheckpointMagic) w.bytes.push_back(static_cast<unsigned char>(c));
  w.u32(kCheckpointFormatVersion);
  w.u32(net.obs_layout_version);
  w.u32(static_cast<std::uint32_t>(net.layers.size()));
  for (int d : net.dims) w.u32(static_cast<std::uint32_t>(d));
  for (const auto& L : net.layers) {
    for (S v : L.w) w.f32(static_cast<float>(v));
    for (S v : L.b) w.f32(static_cast<float>(v));
    if (L.hidden) {
      for (S v : L.bn_gamma) w.f32(static_cast<float>(v));
      for (S v : L.bn_beta) w.f32(static_cast<float>(v));
      for (S v : L.bn_mean) w.f32(static_cast<float>(v));
      for (S v : L.bn_var) w.f32(static_cast<float>(v));
    }
  }
  const std::uint32_t crc = detail::crc32(w.bytes.data(), w.bytes.size());
  w.u32(crc);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw parse_error("cannot write checkpoint '" + path + "'");
  out.write(reinterpret_cast<const char*>(w.bytes.data()),
            static_cast<std::streamsize>(w.bytes.size()));
  if (!out) throw parse_error("short write on checkpoint '" + path + "'");
}

// Loads a float32 network. Pass the caller's observation-layout version;
// any mismatch is rejected by name before parameters are touched.
inline QNetwork load_checkpoint(const std::string& path, std::uint32_t expected_obs_layout) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw parse_error("cannot open checkpoint '" + path + "'");
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)),
                                   std::istreambuf_iterator<char>());
  if (bytes.size() < 8) throw parse_error("checkpoint: truncated file");
  const std::uint32_t stored_crc = detail::crc32(bytes.data(), bytes.size() - 4);
  detail::ByteReader tail{bytes, bytes.size() - 4};
  if (tail.u32() != stored_crc) throw parse_error("checkpoint: field 'crc32' mismatch (corrupt file)");

  detail::ByteReader r{bytes};
  for (char c : kCheckpointMagic) {
    if (r.eof(1) || bytes[r.pos++] != static_cast<unsigned char>(c)) {
      throw parse_error("checkpoint: field 'magic' mismatch");
    }
  }
  const auto format = r.u32();
  if (format != kCheckpointFormatVersion) {
    throw parse_error("checkpoint: field 'format_version' mismatch (got " + std::to_string(format) + ")");
  }
  const auto obs_layout = r.u32();
  if (obs_layout != expected_obs_layout) {
    throw parse_error("checkpoint: field 'obs_layout_version' mismatch (got " +
                      std::to_string(obs_layout) + ", expected " + std::to_string(expected_obs_layout) + ")");
  }
  const auto n_layers = r.u32();
  if (n_layers == 0 || n_layers > 64) throw parse_error("checkpoint: field 'layer_count' is implausible");
  QNetwork net;
  net.obs_layout_version = obs_layout;
  net.dims.resize(n_layers + 1);
  for (auto& d : net.dims) {
    d = static_cast<int>(r.u32());
    if (d < 1 || d > 1 << 20) throw parse_error("checkpoint: field 'dims' is implausible");
  }
  for (std::size_t l = 0; l < n_layers; ++l) {
    QNetwork::Layer L;
    L.in = net.dims[l];
    L.out = net.dims[l + 1];
    L.hidden = l + 1 < n_layers;
    const auto read_vec = [&r](std::vector<float>& v, std::size_t n) {
      v.resize(n);
      for (auto& x : v) x = r.f32();
    };
    read_vec(L.w, static_cast<std::size_t>(L.in) * static_cast<std::size_t>(L.out));
    read_vec(L.b, static_cast<std::size_t>(L.out));
    if (L.hidden) {
      read_vec(L.bn_gamma, static_cast<std::size_t>(L.out));
      read_vec(L.bn_beta, static_cast<std::size_t>(L.out));
      read_vec(L.bn_mean, static_cast<std::size_t>(L.out));
      read_vec(L.bn_var, static_cast<std::size_t>(L.out));
    }
    net.layers.push_back(std::move(L));
  }
  if (r.pos != bytes.size() - 4) throw parse_error("checkpoint: trailing bytes before crc32");
  return net;
}

}  // namespace secsel
