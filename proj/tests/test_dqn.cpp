#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <vector>

#include "secsel/dqn.hpp"
#include "secsel/rng.hpp"

using namespace secsel;

namespace {

struct TempFile {
  std::string path;
  TempFile() {
    static int counter = 0;
    path = (std::filesystem::temp_directory_path() /
            ("secsel_ckpt_" + std::to_string(::getpid()) + "_" + std::to_string(counter++)))
               .string();
  }
  ~TempFile() { std::filesystem::remove(path); }
};

// Independent eval-mode forward pass: plain matrix arithmetic written apart
// from the library's implementation.
template <class S>
std::vector<S> oracle_forward(const QNetT<S>& net, const std::vector<S>& x) {
  std::vector<S> h = x;
  for (std::size_t l = 0; l < net.layers.size(); ++l) {
    const auto& L = net.layers[l];
    std::vector<S> z(static_cast<std::size_t>(L.out));
    for (int o = 0; o < L.out; ++o) {
      S acc = L.b[static_cast<std::size_t>(o)];
      for (int i = 0; i < L.in; ++i) {
        acc += L.w[static_cast<std::size_t>(o) * static_cast<std::size_t>(L.in) + static_cast<std::size_t>(i)] *
               h[static_cast<std::size_t>(i)];
      }
      z[static_cast<std::size_t>(o)] = acc;
    }
    if (L.hidden) {
      for (int o = 0; o < L.out; ++o) {
        const auto j = static_cast<std::size_t>(o);
        const S xhat = (z[j] - L.bn_mean[j]) / std::sqrt(L.bn_var[j] + static_cast<S>(kBnEps));
        S y = L.bn_gamma[j] * xhat + L.bn_beta[j];
        z[j] = y > S(0) ? y : S(0);
      }
    }
    h = std::move(z);
  }
  return h;
}

template <class S>
void randomize_bn(QNetT<S>& net, Rng& rng) {
  for (auto& L : net.layers) {
    if (!L.hidden) continue;
    for (auto& v : L.bn_gamma) v = static_cast<S>(rng.uniform(0.5, 1.5));
    for (auto& v : L.bn_beta) v = static_cast<S>(rng.uniform(-0.3, 0.3));
    for (auto& v : L.bn_mean) v = static_cast<S>(rng.uniform(-0.5, 0.5));
    for (auto& v : L.bn_var) v = static_cast<S>(rng.uniform(0.25, 2.0));
  }
}

// Batch MSE loss over chosen actions, evaluated through the library's
// forward pass on a scratch copy (train-mode forwards may touch running
// statistics).
double batch_loss(const QNetT<double>& net, const std::vector<double>& obs, std::size_t batch,
                  const std::vector<int>& actions, const std::vector<double>& targets) {
  auto scratch = net;
  auto cache = forward_batch<double>(scratch, obs, batch, NetMode::Train, nullptr);
  const auto out = static_cast<std::size_t>(net.output_dim());
  double loss = 0.0;
  for (std::size_t b = 0; b < batch; ++b) {
    const double d = cache.q[b * out + static_cast<std::size_t>(actions[b])] - targets[b];
    loss += d * d;
  }
  return loss / static_cast<double>(batch);
}

struct FdReport {
  double max_rel = 0.0;
  int checked = 0;
};

// Central finite differences across every parameter tensor.
FdReport finite_difference_check(QNetT<double> net, const std::vector<double>& obs, std::size_t batch,
                                 const std::vector<int>& actions, const std::vector<double>& targets) {
  const auto out = static_cast<std::size_t>(net.output_dim());
  auto scratch = net;
  auto cache = forward_batch<double>(scratch, obs, batch, NetMode::Train, nullptr);
  std::vector<double> dq(batch * out, 0.0);
  for (std::size_t b = 0; b < batch; ++b) {
    const double d = cache.q[b * out + static_cast<std::size_t>(actions[b])] - targets[b];
    dq[b * out + static_cast<std::size_t>(actions[b])] = 2.0 * d / static_cast<double>(batch);
  }
  const auto grads = backward_batch<double>(net, cache, dq);

  const double h = 1e-5;
  FdReport report;
  auto check_tensor = [&](std::vector<double>& param, const std::vector<double>& grad) {
    for (std::size_t i = 0; i < param.size(); ++i) {
      const double saved = param[i];
      param[i] = saved + h;
      const double up = batch_loss(net, obs, batch, actions, targets);
      param[i] = saved - h;
      const double down = batch_loss(net, obs, batch, actions, targets);
      param[i] = saved;
      const double numeric = (up - down) / (2.0 * h);
      const double analytic = grad[i];
      const double denom = std::max({std::abs(numeric), std::abs(analytic), 1e-6});
      report.max_rel = std::max(report.max_rel, std::abs(numeric - analytic) / denom);
      ++report.checked;
    }
  };
  for (std::size_t l = 0; l < net.layers.size(); ++l) {
    check_tensor(net.layers[l].w, grads.layers[l].w);
    check_tensor(net.layers[l].b, grads.layers[l].b);
    if (net.layers[l].hidden) {
      check_tensor(net.layers[l].bn_gamma, grads.layers[l].gamma);
      check_tensor(net.layers[l].bn_beta, grads.layers[l].beta);
    }
  }
  return report;
}

Transition make_transition(Rng& rng, int obs_len, int n_actions, bool done) {
  Transition t;
  t.obs.resize(static_cast<std::size_t>(obs_len));
  for (auto& v : t.obs) v = static_cast<float>(rng.u01());
  t.action = static_cast<int>(rng.uniform_int(0, n_actions - 1));
  t.reward = static_cast<float>(rng.u01());
  t.done = done;
  if (!done) {
    t.next_obs.resize(static_cast<std::size_t>(obs_len));
    for (auto& v : t.next_obs) v = static_cast<float>(rng.u01());
    t.next_mask.assign(static_cast<std::size_t>(n_actions), 0);
    t.next_mask[static_cast<std::size_t>(rng.uniform_int(0, n_actions - 1))] = 1;
    t.next_mask.back() = 1;
  }
  return t;
}

}  // namespace

TEST_CASE("forward basics") {
  Rng rng(1);

  SECTION("zero parameters give a zero Q vector") {
    auto net = make_qnet<float>({4, 8, 8, 3}, 0.0, true, 1, rng);
    for (auto& L : net.layers) {
      std::fill(L.w.begin(), L.w.end(), 0.0f);
      std::fill(L.b.begin(), L.b.end(), 0.0f);
    }
    const std::vector<float> obs = {0.3f, 0.9f, 0.1f, 0.5f};
    for (float q : forward<float>(net, obs)) CHECK(q == 0.0f);
  }

  SECTION("eval forward is bit-deterministic") {
    auto net = make_qnet<float>({6, 16, 8, 4}, 0.2, true, 1, rng);
    std::vector<float> obs(6);
    for (auto& v : obs) v = static_cast<float>(rng.u01());
    const auto a = forward<float>(net, obs);
    const auto b = forward<float>(net, obs);
    CHECK(a == b);
  }

  SECTION("matches the independent matrix-arithmetic oracle (dims 4-8-8-3)") {
    auto net = make_qnet<double>({4, 8, 8, 3}, 0.0, true, 1, rng);
    randomize_bn(net, rng);
    for (int trial = 0; trial < 50; ++trial) {
      std::vector<double> obs(4);
      for (auto& v : obs) v = rng.uniform(-1.0, 1.0);
      const auto got = forward<double>(net, obs);
      const auto want = oracle_forward(net, obs);
      REQUIRE(got.size() == want.size());
      for (std::size_t i = 0; i < got.size(); ++i) {
        CHECK(got[i] == Catch::Approx(want[i]).epsilon(1e-6).margin(1e-12));
      }
    }
  }

  SECTION("dimension mismatch is structural") {
    auto net = make_qnet<float>({4, 8, 3}, 0.0, true, 1, rng);
    const std::vector<float> short_obs = {0.1f, 0.2f};
    CHECK_THROWS_AS(forward<float>(net, short_obs), structural_error);
  }
}

TEST_CASE("gradients match central finite differences", "[property]") {
  Rng rng(20240813);
  const std::vector<int> dims = {3, 4, 4, 2};
  const std::size_t batch = 5;
  std::vector<double> obs(batch * 3);
  for (auto& v : obs) v = rng.uniform(-1.0, 1.0);
  std::vector<int> actions(batch);
  std::vector<double> targets(batch);
  for (std::size_t b = 0; b < batch; ++b) {
    actions[b] = static_cast<int>(rng.uniform_int(0, 1));
    targets[b] = rng.uniform(0.0, 1.0);
  }

  SECTION("eval-mode batch norm (running statistics)") {
    auto net = make_qnet<double>(dims, 0.0, false, 1, rng);
    randomize_bn(net, rng);
    const auto report = finite_difference_check(net, obs, batch, actions, targets);
    INFO("checked " << report.checked << " parameters");
    CHECK(report.max_rel < 1e-4);
  }

  SECTION("train-mode batch norm (batch statistics)") {
    auto net = make_qnet<double>(dims, 0.0, true, 1, rng);
    randomize_bn(net, rng);
    const auto report = finite_difference_check(net, obs, batch, actions, targets);
    INFO("checked " << report.checked << " parameters");
    CHECK(report.max_rel < 1e-4);
  }
}

TEST_CASE("td_targets") {
  Rng rng(3);
  ReplayBuffer buffer(16);
  auto target = make_qnet<float>({4, 8, 3}, 0.0, true, 1, rng);

  SECTION("terminal transitions return the raw reward") {
    auto t = make_transition(rng, 4, 3, true);
    t.reward = 0.62f;
    buffer.push(t);
    const std::vector<std::size_t> idx = {0};
    const auto targets = td_targets<float>(buffer, idx, target, 0.99);
    CHECK(targets[0] == 0.62f);
  }

  SECTION("gamma 0 reduces to the reward") {
    buffer.push(make_transition(rng, 4, 3, false));
    const std::vector<std::size_t> idx = {0};
    const auto targets = td_targets<float>(buffer, idx, target, 0.0);
    CHECK(targets[0] == buffer[0].reward);
  }

  SECTION("bootstraps with the max over mask-valid actions only") {
    // craft a target net computing known Q values: zero weights, biases on
    // the output layer give constant Q = (0.2, 0.5, 0.9)
    for (auto& L : target.layers) {
      std::fill(L.w.begin(), L.w.end(), 0.0f);
      std::fill(L.b.begin(), L.b.end(), 0.0f);
    }
    target.layers.back().b = {0.2f, 0.5f, 0.9f};
    Transition t = make_transition(rng, 4, 3, false);
    t.reward = 0.1f;
    t.next_mask = {1, 1, 0};  // the 0.9 action is invalid
    ReplayBuffer b2(4);
    b2.push(t);
    const std::vector<std::size_t> idx = {0};
    const auto targets = td_targets<float>(b2, idx, target, 0.99);
    CHECK(targets[0] == Catch::Approx(0.1 + 0.99 * 0.5));
  }
}

TEST_CASE("train_step") {
  Rng rng(4);
  TrainConfig cfg;
  cfg.batch_size = 8;
  cfg.buffer_capacity = 8;
  cfg.dropout = 0.0;

  SECTION("zero TD error gives zero loss and no parameter motion") {
    auto net = make_qnet<float>({4, 8, 8, 3}, 0.0, true, 1, rng);
    for (auto& L : net.layers) {
      std::fill(L.w.begin(), L.w.end(), 0.0f);
      std::fill(L.b.begin(), L.b.end(), 0.0f);
    }
    auto target = net;
    ReplayBuffer buffer(8);
    for (int i = 0; i < 8; ++i) {
      auto t = make_transition(rng, 4, 3, true);
      t.reward = 0.0f;  // target 0 = current Q
      buffer.push(t);
    }
    auto adam = make_adam(net);
    const auto before = net.layers[0].w;
    const double loss = train_step<float>(net, target, buffer, cfg, adam, rng);
    CHECK(loss <= 1e-10);
    CHECK(net.layers[0].w == before);
  }

  SECTION("loss decreases monotonically on a fixed batch (batch norm frozen)") {
    TrainConfig c2 = cfg;
    c2.batch_norm = false;
    c2.learning_rate = 1e-3;
    auto net = make_qnet<float>({6, 16, 8, 2}, 0.0, false, 1, rng);
    auto target = net;
    ReplayBuffer buffer(8);
    for (int i = 0; i < 8; ++i) buffer.push(make_transition(rng, 6, 2, true));
    auto adam = make_adam(net);
    double prev = 1e18;
    for (int step = 0; step < 100; ++step) {
      const double loss = train_step<float>(net, target, buffer, c2, adam, rng);
      CHECK(loss < prev);
      prev = loss;
    }
  }

  SECTION("parameters stay finite over many noisy steps") {
    auto net = make_qnet<float>({5, 16, 8, 3}, 0.1, true, 1, rng);
    auto target = net;
    ReplayBuffer buffer(256);
    for (int i = 0; i < 256; ++i) buffer.push(make_transition(rng, 5, 3, rng.bernoulli(0.2)));
    auto adam = make_adam(net);
    TrainConfig c3 = cfg;
    c3.batch_size = 32;
    c3.buffer_capacity = 256;
    c3.dropout = 0.1;
    for (int step = 0; step < 10000; ++step) {
      train_step<float>(net, target, buffer, c3, adam, rng);
      if (step % 500 == 0) sync_target(net, target);
    }
    CHECK(all_finite(net));
  }

  SECTION("empty buffer is a contract violation") {
    auto net = make_qnet<float>({4, 8, 3}, 0.0, true, 1, rng);
    auto target = net;
    ReplayBuffer buffer(8);
    auto adam = make_adam(net);
    CHECK_THROWS_AS(train_step<float>(net, target, buffer, cfg, adam, rng), contract_error);
  }

  SECTION("fixed seed reproduces the loss trajectory") {
    auto run = [&](std::uint64_t seed) {
      Rng r(seed);
      auto net = make_qnet<float>({5, 16, 8, 3}, 0.2, true, 1, r);
      auto target = net;
      ReplayBuffer buffer(64);
      for (int i = 0; i < 64; ++i) buffer.push(make_transition(r, 5, 3, r.bernoulli(0.3)));
      auto adam = make_adam(net);
      TrainConfig c;
      c.batch_size = 16;
      c.buffer_capacity = 64;
      std::vector<double> losses;
      for (int step = 0; step < 50; ++step) {
        losses.push_back(train_step<float>(net, target, buffer, c, adam, r));
      }
      return losses;
    };
    CHECK(run(77) == run(77));
  }
}

TEST_CASE("select_action") {
  Rng rng(5);
  auto net = make_qnet<float>({4, 8, 3}, 0.0, true, 1, rng);
  for (auto& L : net.layers) {
    std::fill(L.w.begin(), L.w.end(), 0.0f);
    std::fill(L.b.begin(), L.b.end(), 0.0f);
  }
  net.layers.back().b = {0.1f, 0.9f, 0.3f};
  const std::vector<float> obs = {0.1f, 0.2f, 0.3f, 0.4f};

  SECTION("greedy argmax") {
    const std::vector<std::uint8_t> all = {1, 1, 1};
    CHECK(select_action<float>(net, obs, all, 0.0, rng) == 1);
  }

  SECTION("masked argmax excludes invalid actions") {
    const std::vector<std::uint8_t> mask = {1, 0, 1};
    CHECK(select_action<float>(net, obs, mask, 0.0, rng) == 2);
  }

  SECTION("argmax ties break to the lowest index") {
    net.layers.back().b = {0.5f, 0.5f, 0.2f};
    const std::vector<std::uint8_t> all = {1, 1, 1};
    CHECK(select_action<float>(net, obs, all, 0.0, rng) == 0);
  }

  SECTION("epsilon 1 explores uniformly over valid actions (chi-square)") {
    const std::vector<std::uint8_t> mask = {1, 0, 1};
    std::vector<int> counts(3, 0);
    const int n = 10000;
    for (int i = 0; i < n; ++i) ++counts[static_cast<std::size_t>(select_action<float>(net, obs, mask, 1.0, rng))];
    CHECK(counts[1] == 0);
    const double expected = n / 2.0;
    double chi2 = 0.0;
    for (int a : {0, 2}) {
      chi2 += (counts[static_cast<std::size_t>(a)] - expected) * (counts[static_cast<std::size_t>(a)] - expected) / expected;
    }
    CHECK(chi2 < 10.83);  // df=1 at alpha=0.001
  }

  SECTION("all-invalid mask is a contract violation") {
    const std::vector<std::uint8_t> none = {0, 0, 0};
    CHECK_THROWS_AS(select_action<float>(net, obs, none, 0.5, rng), contract_error);
  }

  SECTION("masked actions never returned under any epsilon (fuzz)") {
    Rng fuzz(6);
    for (int i = 0; i < 100000; ++i) {
      std::vector<std::uint8_t> mask(3, 0);
      mask[static_cast<std::size_t>(fuzz.uniform_int(0, 2))] = 1;
      if (fuzz.bernoulli(0.5)) mask[static_cast<std::size_t>(fuzz.uniform_int(0, 2))] = 1;
      const int a = select_action<float>(net, obs, mask, fuzz.u01(), fuzz);
      CHECK(mask[static_cast<std::size_t>(a)] == 1);
    }
  }
}

TEST_CASE("sync_target") {
  Rng rng(7);
  auto net = make_qnet<float>({6, 16, 8, 4}, 0.2, true, 1, rng);
  auto target = make_qnet<float>({6, 16, 8, 4}, 0.2, true, 1, rng);

  sync_target(net, target);
  SECTION("post-sync outputs are identical on 100 random inputs") {
    for (int i = 0; i < 100; ++i) {
      std::vector<float> obs(6);
      for (auto& v : obs) v = static_cast<float>(rng.u01());
      CHECK(forward<float>(net, obs) == forward<float>(target, obs));
    }
  }

  SECTION("mutating the net leaves the target unchanged") {
    const auto snapshot = target.layers[0].w;
    net.layers[0].w[0] += 1.0f;
    CHECK(target.layers[0].w == snapshot);
  }

  SECTION("sync is idempotent") {
    sync_target(net, target);
    auto twice = target;
    sync_target(net, target);
    CHECK(target.layers[0].w == twice.layers[0].w);
    CHECK(target.layers[1].bn_mean == twice.layers[1].bn_mean);
  }
}

TEST_CASE("checkpoint round-trip and rejection") {
  Rng rng(8);
  auto net = make_qnet<float>({10, 16, 8, 5}, 0.2, true, 3, rng);
  randomize_bn(net, rng);
  TempFile file;
  save_checkpoint(net, file.path);

  SECTION("round-trip forward outputs are bit-identical on 100 random inputs") {
    const auto loaded = load_checkpoint(file.path, 3);
    CHECK(loaded.dims == net.dims);
    for (int i = 0; i < 100; ++i) {
      std::vector<float> obs(10);
      for (auto& v : obs) v = static_cast<float>(rng.u01());
      CHECK(forward<float>(net, obs) == forward<float>(loaded, obs));
    }
  }

  SECTION("truncated file is rejected") {
    std::ifstream in(file.path, std::ios::binary);
    std::vector<char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    in.close();
    std::ofstream out(file.path, std::ios::binary | std::ios::trunc);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size() / 2));
    out.close();
    CHECK_THROWS_AS(load_checkpoint(file.path, 3), parse_error);
  }

  SECTION("obs-layout mismatch is rejected by name") {
    CHECK_THROWS_WITH(load_checkpoint(file.path, 4),
                      Catch::Matchers::ContainsSubstring("obs_layout_version"));
  }

  SECTION("bad magic is rejected") {
    std::ifstream in(file.path, std::ios::binary);
    std::vector<char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    in.close();
    bytes[0] = 'X';
    std::ofstream out(file.path, std::ios::binary | std::ios::trunc);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    out.close();
    CHECK_THROWS_AS(load_checkpoint(file.path, 3), parse_error);
  }

  SECTION("flipped payload byte fails the CRC") {
    std::ifstream in(file.path, std::ios::binary);
    std::vector<char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    in.close();
    bytes[bytes.size() / 2] ^= 0x40;
    std::ofstream out(file.path, std::ios::binary | std::ios::trunc);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    out.close();
    CHECK_THROWS_WITH(load_checkpoint(file.path, 3), Catch::Matchers::ContainsSubstring("crc32"));
  }

  SECTION("missing file reports an error") {
    CHECK_THROWS_AS(load_checkpoint("/nonexistent/file.qnet", 3), parse_error);
  }
}

TEST_CASE("checkpoint round-trip bit-exactness across many nets", "[property]") {
  Rng rng(9);
  for (int trial = 0; trial < 1000; ++trial) {
    const int in = static_cast<int>(rng.uniform_int(2, 12));
    const int h = static_cast<int>(rng.uniform_int(2, 12));
    const int out = static_cast<int>(rng.uniform_int(2, 6));
    auto net = make_qnet<float>({in, h, out}, 0.0, true, 1, rng);
    randomize_bn(net, rng);
    TempFile file;
    save_checkpoint(net, file.path);
    const auto loaded = load_checkpoint(file.path, 1);
    std::vector<float> obs(static_cast<std::size_t>(in));
    for (auto& v : obs) v = static_cast<float>(rng.uniform(-1.0, 1.0));
    CHECK(forward<float>(net, obs) == forward<float>(loaded, obs));
  }
}

TEST_CASE("replay buffer") {
  ReplayBuffer buffer(4);
  Rng rng(10);
  for (int i = 0; i < 6; ++i) {
    Transition t;
    t.obs = {static_cast<float>(i)};
    t.action = 0;
    t.done = true;
    buffer.push(std::move(t));
  }
  CHECK(buffer.size() == 4);  // ring capacity

  SECTION("oldest entries are overwritten first") {
    std::vector<float> firsts;
    for (std::size_t i = 0; i < buffer.size(); ++i) firsts.push_back(buffer[i].obs[0]);
    std::sort(firsts.begin(), firsts.end());
    CHECK(firsts == std::vector<float>{2.0f, 3.0f, 4.0f, 5.0f});
  }

  SECTION("samples are distinct within a batch") {
    for (int trial = 0; trial < 1000; ++trial) {
      auto idx = buffer.sample(3, rng);
      std::sort(idx.begin(), idx.end());
      CHECK(std::adjacent_find(idx.begin(), idx.end()) == idx.end());
      for (auto i : idx) CHECK(i < buffer.size());
    }
  }

  SECTION("oversampling is a contract violation") {
    CHECK_THROWS_AS(buffer.sample(5, rng), contract_error);
  }
}

TEST_CASE("epsilon schedule") {
  TrainConfig cfg;
  cfg.epsilon_start = 1.0;
  cfg.epsilon_end = 0.05;
  cfg.epsilon_decay_steps = 1000;
  CHECK(epsilon_at(cfg, 0) == 1.0);
  CHECK(epsilon_at(cfg, 500) == Catch::Approx(0.525));
  CHECK(epsilon_at(cfg, 1000) == Catch::Approx(0.05));
  CHECK(epsilon_at(cfg, 100000) == Catch::Approx(0.05));
}

TEST_CASE("train config validation") {
  TrainConfig cfg;
  CHECK_NOTHROW(cfg.validate());
  auto gamma_bad = cfg;
  gamma_bad.gamma = 1.0;
  CHECK_THROWS_AS(gamma_bad.validate(), config_error);
  auto eps_bad = cfg;
  eps_bad.epsilon_end = 2.0;
  CHECK_THROWS_AS(eps_bad.validate(), config_error);
  auto buf_bad = cfg;
  buf_bad.buffer_capacity = 1;
  CHECK_THROWS_AS(buf_bad.validate(), config_error);
}
