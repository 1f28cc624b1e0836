#include <map>
#include <fstream>
#include <cmath>
#include <random>

#include "doctest.h"
#include "support.hpp"
#include "toxbuster/checkpoint.hpp"
#include "toxbuster/encoder.hpp"
#include "toxbuster/kernels.hpp"
#include "toxbuster/log.hpp"

using namespace toxbuster;
using testing::random_input;
using testing::tiny_config;

namespace {

using Mat = std::vector<std::vector<double>>;

Mat zeros(std::size_t r, std::size_t c) { return Mat(r, std::vector<double>(c, 0.0)); }

Mat mul(const Mat &a, const std::vector<double> &w, std::size_t cols, const std::vector<double> &bias) {
  Mat out = zeros(a.size(), cols);
  for (std::size_t i = 0; i < a.size(); ++i)
    for (std::size_t j = 0; j < cols; ++j) {
      double s = bias.empty() ? 0.0 : bias[j];
      for (std::size_t k = 0; k < a[i].size(); ++k) s += a[i][k] * w[k * cols + j];
      out[i][j] = s;
    }
  return out;
}

Mat norm(const Mat &x, const std::vector<double> &g, const std::vector<double> &b, double eps) {
  Mat out = x;
  for (std::size_t i = 0; i < x.size(); ++i) {
    double mean = 0, var = 0;
    for (double v : x[i]) mean += v;
    mean /= static_cast<double>(x[i].size());
    for (double v : x[i]) var += (v - mean) * (v - mean);
    var /= static_cast<double>(x[i].size());
    for (std::size_t j = 0; j < x[i].size(); ++j) out[i][j] = g[j] * (x[i][j] - mean) / std::sqrt(var + eps) + b[j];
  }
  return out;
}

// Step-by-step token-level forward written independently of the library.
Mat oracle_forward(const EncoderInput &in, const Parameters<double> &p) {
  const auto &c = p.config;
  const auto d = static_cast<std::size_t>(c.hidden);
  const auto L = in.size();
  const auto &lay = *p.layout;
  Mat x = zeros(L, d);
  for (std::size_t t = 0; t < L; ++t)
    for (std::size_t j = 0; j < d; ++j) {
      double s = p.at(lay.token)[static_cast<std::size_t>(in.token_ids[t]) * d + j] +
                 p.at(lay.position)[static_cast<std::size_t>(in.position_ids[t]) * d + j];
      if (lay.segment >= 0) s += p.at(lay.segment)[static_cast<std::size_t>(in.segment_ids[t]) * d + j];
      if (lay.team >= 0) s += p.at(lay.team)[static_cast<std::size_t>(in.team_ids[t]) * d + j];
      if (lay.chat_type >= 0) s += p.at(lay.chat_type)[static_cast<std::size_t>(in.chat_type_ids[t]) * d + j];
      if (lay.player >= 0) s += p.at(lay.player)[static_cast<std::size_t>(in.player_ids[t]) * d + j];
      x[t][j] = s;
    }
  x = norm(x, p.at(lay.emb_ln_g), p.at(lay.emb_ln_b), c.layer_norm_eps);
  const auto H = static_cast<std::size_t>(c.heads);
  const std::size_t dh = d / H;
  for (const auto &W : lay.layers) {
    const Mat q = mul(x, p.at(W.wq), d, p.at(W.bq));
    const Mat k = mul(x, p.at(W.wk), d, p.at(W.bk));
    const Mat v = mul(x, p.at(W.wv), d, p.at(W.bv));
    Mat ctx = zeros(L, d);
    for (std::size_t h = 0; h < H; ++h)
      for (std::size_t i = 0; i < L; ++i) {
        std::vector<double> s(L);
        double mx = -1e300;
        for (std::size_t j = 0; j < L; ++j) {
          if (in.token_ids[j] == 0) {
            s[j] = -INFINITY;
            continue;
          }
          double dot = 0;
          for (std::size_t e = 0; e < dh; ++e) dot += q[i][h * dh + e] * k[j][h * dh + e];
          s[j] = dot / std::sqrt(static_cast<double>(dh));
          mx = std::max(mx, s[j]);
        }
        double z = 0;
        for (auto &e : s) z += (e = std::exp(e - mx));
        for (std::size_t j = 0; j < L; ++j)
          for (std::size_t e = 0; e < dh; ++e) ctx[i][h * dh + e] += s[j] / z * v[j][h * dh + e];
      }
    Mat a = mul(ctx, p.at(W.wo), d, p.at(W.bo));
    for (std::size_t i = 0; i < L; ++i)
      for (std::size_t j = 0; j < d; ++j) a[i][j] += x[i][j];
    const Mat h1 = norm(a, p.at(W.ln1_g), p.at(W.ln1_b), c.layer_norm_eps);
    Mat f = mul(h1, p.at(W.w1), static_cast<std::size_t>(c.ff), p.at(W.b1));
    for (auto &row : f)
      for (auto &e : row) e = 0.5 * e * (1 + std::erf(e / std::sqrt(2.0)));
    Mat f2 = mul(f, p.at(W.w2), d, p.at(W.b2));
    for (std::size_t i = 0; i < L; ++i)
      for (std::size_t j = 0; j < d; ++j) f2[i][j] += h1[i][j];
    x = norm(f2, p.at(W.ln2_g), p.at(W.ln2_b), c.layer_norm_eps);
  }
  return mul(x, p.at(lay.head_w), static_cast<std::size_t>(c.n_labels), p.at(lay.head_b));
}

// Metadata tables start at zero; perturb them so tests exercise them.
template <typename T> void randomize_metadata(Parameters<T> &p, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> nd(0.0, 0.05);
  for (int idx : {p.layout->team, p.layout->chat_type, p.layout->player})
    if (idx >= 0)
      for (auto &v : p.at(idx)) v = static_cast<T>(nd(rng));
}

} // namespace

TEST_CASE("config validation and layout") {
  auto c = tiny_config();
  c.heads = 3;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = tiny_config();
  const ParamLayout lay(c);
  CHECK(lay.find("embeddings.player") >= 0);
  CHECK(lay.find("pooler.w") == -1);
  c.use_player = false;
  CHECK(ParamLayout(c).find("embeddings.player") == -1);
  c.mode = ClassificationMode::SentenceLevel;
  CHECK(ParamLayout(c).find("pooler.w") >= 0);
}

TEST_CASE("init: metadata tables and biases zero, gains one, deterministic") {
  const auto p = init_parameters<float>(tiny_config(), 9);
  for (float v : p.at(p.layout->player)) CHECK(v == 0.0f);
  for (float v : p.at(p.layout->team)) CHECK(v == 0.0f);
  for (float v : p.at(p.layout->layers[0].bq)) CHECK(v == 0.0f);
  for (float v : p.at(p.layout->emb_ln_g)) CHECK(v == 1.0f);
  CHECK(init_parameters<float>(tiny_config(), 9).tensors == p.tensors);
  CHECK(init_parameters<float>(tiny_config(), 10).tensors != p.tensors);
}

TEST_CASE("embedding sum equals an independent six-way lookup") {
  std::mt19937_64 rng(1);
  auto p = init_parameters<double>(tiny_config(), 3);
  randomize_metadata(p, 4);
  const auto in = random_input(p.config, 9, rng);
  const auto e = embedding_sum(in, p);
  const auto d = static_cast<std::size_t>(p.config.hidden);
  const auto &lay = *p.layout;
  for (std::size_t t = 0; t < in.size(); ++t)
    for (std::size_t j = 0; j < d; ++j) {
      auto row = [&](int table, int id) { return p.at(table)[static_cast<std::size_t>(id) * d + j]; };
      const double expect = row(lay.token, in.token_ids[t]) + row(lay.position, in.position_ids[t]) +
                            row(lay.segment, in.segment_ids[t]) + row(lay.team, in.team_ids[t]) +
                            row(lay.chat_type, in.chat_type_ids[t]) + row(lay.player, in.player_ids[t]);
      CHECK(e(t, j) == doctest::Approx(expect).epsilon(1e-14));
    }
}

TEST_CASE("embedding rows differ by exactly the player-row difference") {
  std::mt19937_64 rng(2);
  auto p = init_parameters<double>(tiny_config(), 3);
  randomize_metadata(p, 5);
  auto a = random_input(p.config, 6, rng);
  auto b = a;
  b.player_ids[2] = (a.player_ids[2] + 1) % p.config.n_players;
  const auto ea = embedding_sum(a, p), eb = embedding_sum(b, p);
  const auto d = static_cast<std::size_t>(p.config.hidden);
  const auto &tab = p.at(p.layout->player);
  for (std::size_t j = 0; j < d; ++j) {
    const double diff = tab[static_cast<std::size_t>(b.player_ids[2]) * d + j] - tab[static_cast<std::size_t>(a.player_ids[2]) * d + j];
    CHECK(eb(2, j) - ea(2, j) == doctest::Approx(diff).epsilon(1e-12));
    CHECK(eb(1, j) == ea(1, j));
  }
}

TEST_CASE("ids out of table bounds name the table") {
  std::mt19937_64 rng(3);
  const auto p = init_parameters<double>(tiny_config(), 3);
  auto in = random_input(p.config, 5, rng);
  in.player_ids[1] = 99;
  try {
    forward(in, p);
    FAIL("expected ConfigError");
  } catch (const ConfigError &e) {
    CHECK(std::string(e.what()).find("player") != std::string::npos);
  }
}

TEST_CASE("forward matches an independent step-by-step computation") {
  std::mt19937_64 rng(4);
  for (int layers : {1, 2}) {
    auto p = init_parameters<double>(tiny_config(40, layers), 11);
    randomize_metadata(p, 12);
    // non-trivial biases and gains
    std::normal_distribution<double> nd(0.0, 0.1);
    for (std::size_t t = 0; t < p.tensors.size(); ++t)
      if (p.layout->specs()[t].rows == 1)
        for (auto &v : p.tensors[t]) v += nd(rng);
    auto in = random_input(p.config, 7, rng);
    in.token_ids[6] = 0; // one padding key
    const auto out = forward(in, p).logits;
    const auto ref = oracle_forward(in, p);
    for (std::size_t i = 0; i < in.size(); ++i)
      for (std::size_t j = 0; j < 9; ++j) CHECK(out(i, j) == doctest::Approx(ref[i][j]).epsilon(1e-10));
  }
}

TEST_CASE("single token input: one row of nine probabilities summing to one") {
  std::mt19937_64 rng(5);
  const auto p = init_parameters<double>(tiny_config(), 1);
  const auto in = random_input(p.config, 1, rng);
  const auto pr = probabilities(forward(in, p).logits);
  REQUIRE(pr.rows == 1);
  REQUIRE(pr.cols == 9);
  double s = 0;
  for (double v : pr.row(0)) s += v;
  CHECK(std::abs(s - 1.0) < 1e-12);
}

TEST_CASE("padding tail does not change real positions") {
  std::mt19937_64 rng(6);
  const auto p = init_parameters<float>(tiny_config(), 2);
  auto in = random_input(p.config, 6, rng);
  const auto base = forward(in, p).logits;
  auto padded = in;
  pad_to(padded, 12);
  padded.position_ids = in.position_ids;
  for (std::size_t i = in.size(); i < 12; ++i) padded.position_ids.push_back(static_cast<int>(i));
  padded.player_ids[9] = 5;
  padded.team_ids[10] = 1;
  const auto out = forward(padded, p).logits;
  for (std::size_t i = 0; i < in.size(); ++i)
    for (std::size_t j = 0; j < 9; ++j) CHECK(out(i, j) == doctest::Approx(base(i, j)).epsilon(1e-5));
}

TEST_CASE("metadata identity: zeroed tables make scores bitwise independent of metadata ids") {
  std::mt19937_64 rng(7);
  const auto p = init_parameters<float>(tiny_config(), 13);
  const auto in = random_input(p.config, 10, rng);
  const auto base = forward(in, p).logits.data;
  for (int trial = 0; trial < 20; ++trial) {
    auto perm = in;
    std::shuffle(perm.player_ids.begin(), perm.player_ids.end(), rng);
    std::shuffle(perm.team_ids.begin(), perm.team_ids.end(), rng);
    std::shuffle(perm.chat_type_ids.begin(), perm.chat_type_ids.end(), rng);
    CHECK(forward(perm, p).logits.data == base);
  }
}

TEST_CASE("cross entropy: all ignored is zero, uniform is ln 9, matches scalar log-softmax") {
  Matrix<double> z(2, 9);
  std::vector<int> ignored = {kIgnoreLabel, kIgnoreLabel};
  {
    log::ScopedCapture cap;
    CHECK(cross_entropy(z, std::span<const int>(ignored)) == 0.0);
    CHECK(cap.warnings().size() == 1);
  }
  std::vector<int> one = {3, kIgnoreLabel};
  CHECK(cross_entropy(z, std::span<const int>(one)) == doctest::Approx(std::log(9.0)).epsilon(1e-12));

  std::mt19937_64 rng(8);
  std::normal_distribution<double> nd;
  for (auto &v : z.data) v = 3 * nd(rng);
  std::vector<int> lab = {2, 7};
  double expect = 0;
  for (std::size_t i = 0; i < 2; ++i) {
    double mx = -1e300, s = 0;
    for (std::size_t j = 0; j < 9; ++j) mx = std::max(mx, z(i, j));
    for (std::size_t j = 0; j < 9; ++j) s += std::exp(z(i, j) - mx);
    expect += -(z(i, static_cast<std::size_t>(lab[i])) - mx - std::log(s));
  }
  CHECK(cross_entropy(z, std::span<const int>(lab)) == doctest::Approx(expect / 2).epsilon(1e-12));
}

TEST_CASE("gradient check, token and sentence level, including metadata tables") {
  std::mt19937_64 rng(9);
  for (auto mode : {ClassificationMode::TokenLevel, ClassificationMode::SentenceLevel}) {
    auto cfg = tiny_config(40, 1);
    cfg.mode = mode;
    auto p = init_parameters<double>(cfg, 21);
    randomize_metadata(p, 22);
    const auto in = random_input(cfg, 8, rng);
    const auto rep = check_gradients(in, p, 1e-5, 1e-4, 20, 3);
    INFO("worst " << rep.worst.tensor << " rel " << rep.worst.rel_error);
    CHECK(rep.passed);
    std::map<std::string, std::size_t> per_tensor;
    for (const auto &e : rep.entries) ++per_tensor[e.tensor];
    for (const auto &spec : p.layout->specs()) {
      const std::size_t floor = spec.embedding ? spec.cols : spec.size();
      CHECK_MESSAGE(per_tensor[spec.name] >= std::min<std::size_t>(20, floor), spec.name);
    }
  }
}

TEST_CASE("gradients of embedding rows absent from the input are zero") {
  std::mt19937_64 rng(10);
  auto p = init_parameters<double>(tiny_config(), 5);
  randomize_metadata(p, 6);
  auto in = random_input(p.config, 6, rng);
  std::fill(in.player_ids.begin(), in.player_ids.end(), 3);
  Gradients<double> g(p.layout);
  const auto fwd = forward(in, p);
  const auto labels = target_labels(in, p.config.mode);
  backward(fwd, in, std::span<const int>(labels), p, 1.0, g);
  const auto d = static_cast<std::size_t>(p.config.hidden);
  const auto &gp = g.at(p.layout->player);
  for (std::size_t r = 0; r < static_cast<std::size_t>(p.config.n_players); ++r) {
    double mag = 0;
    for (std::size_t j = 0; j < d; ++j) mag += std::abs(gp[r * d + j]);
    if (r == 3) CHECK(mag > 0);
    else CHECK(mag == 0);
  }
  CHECK(g.touched_rows(p.layout->player) == std::vector<std::size_t>{3});
}

TEST_CASE("dropout: deterministic per seed, off at inference") {
  std::mt19937_64 rng(11);
  auto cfg = tiny_config();
  cfg.dropout = 0.3;
  const auto p = init_parameters<float>(cfg, 5);
  const auto in = random_input(cfg, 8, rng);
  const auto a = forward(in, p, {true, 42}).logits.data;
  CHECK(forward(in, p, {true, 42}).logits.data == a);
  CHECK(forward(in, p, {true, 43}).logits.data != a);
  CHECK(forward(in, p).logits.data == forward(in, p).logits.data);
}

TEST_CASE("kernels: parallel versions agree with the serial reference") {
  std::mt19937_64 rng(12);
  std::normal_distribution<float> nd;
  for (auto [m, k, n] : {std::tuple<std::size_t, std::size_t, std::size_t>{3, 5, 7}, {64, 48, 80}, {130, 64, 129}}) {
    std::vector<float> a(m * k), b(k * n), bt(n * k), at(k * m), c1(m * n), c2(m * n);
    for (auto *v : {&a, &b, &bt, &at})
      for (auto &x : *v) x = nd(rng);
    using S = std::span<const float>;
    kernels::reference::matmul<float>(S(a), S(b), c1, m, k, n);
    kernels::matmul<float>(S(a), S(b), c2, m, k, n);
    for (std::size_t i = 0; i < c1.size(); ++i) CHECK(c2[i] == doctest::Approx(c1[i]).epsilon(1e-4));
    kernels::reference::matmul_nt<float>(S(a), S(bt), c1, m, k, n);
    kernels::matmul_nt<float>(S(a), S(bt), c2, m, k, n);
    for (std::size_t i = 0; i < c1.size(); ++i) CHECK(c2[i] == doctest::Approx(c1[i]).epsilon(1e-4));
    kernels::reference::matmul_tn<float>(S(at), S(b), c1, m, k, n);
    kernels::matmul_tn<float>(S(at), S(b), c2, m, k, n);
    for (std::size_t i = 0; i < c1.size(); ++i) CHECK(c2[i] == doctest::Approx(c1[i]).epsilon(1e-4));
    std::vector<float> s1 = c1, s2 = c1;
    kernels::reference::softmax_rows<float>(s1, m, n);
    kernels::softmax_rows<float>(s2, m, n);
    CHECK(s1 == s2);
  }
}

TEST_CASE("kernels: results do not depend on the thread count") {
  std::mt19937_64 rng(13);
  std::normal_distribution<float> nd;
  const std::size_t m = 256, k = 128, n = 96;
  std::vector<float> a(m * k), b(k * n), c1(m * n), c2(m * n);
  for (auto &x : a) x = nd(rng);
  for (auto &x : b) x = nd(rng);
  const int saved = omp_get_max_threads();
  omp_set_num_threads(1);
  kernels::matmul<float>(std::span<const float>(a), std::span<const float>(b), c1, m, k, n);
  omp_set_num_threads(4);
  kernels::matmul<float>(std::span<const float>(a), std::span<const float>(b), c2, m, k, n);
  omp_set_num_threads(saved);
  CHECK(c1 == c2);
}

TEST_CASE("checkpoint: bit-identical round trip, truncation and corruption detected") {
  testing::TempDir dir("ckpt");
  std::vector<std::string> lines = {"alpha beta gamma"};
  const auto vocab = build_vocab(lines, 60);
  auto p = init_parameters<float>(tiny_config(static_cast<int>(vocab.size())), 8);
  randomize_metadata(p, 9);
  ContextOptions ctx;
  ctx.mode = ChatMode::Team;
  ctx.inline_fields.player = true;
  save_checkpoint(dir / "m.ckpt", p, vocab, ctx);
  const auto back = load_checkpoint(dir / "m.ckpt");
  CHECK(back.params.tensors == p.tensors);
  CHECK(back.config == p.config);
  CHECK(back.vocab == vocab);
  CHECK(back.context == ctx);
  CHECK(file_hash(dir / "m.ckpt") == file_hash(dir / "m.ckpt"));

  const auto size = std::filesystem::file_size(dir / "m.ckpt");
  std::filesystem::copy_file(dir / "m.ckpt", dir / "t.ckpt");
  std::filesystem::resize_file(dir / "t.ckpt", size - 20);
  CHECK_THROWS_AS(load_checkpoint(dir / "t.ckpt"), IntegrityError);

  std::filesystem::copy_file(dir / "m.ckpt", dir / "c.ckpt");
  {
    std::fstream f(dir / "c.ckpt", std::ios::in | std::ios::out | std::ios::binary);
    f.seekp(static_cast<std::streamoff>(size / 2));
    f.put('\x7f');
  }
  CHECK_THROWS_AS(load_checkpoint(dir / "c.ckpt"), IntegrityError);

  std::filesystem::copy_file(dir / "m.ckpt", dir / "v.ckpt");
  {
    std::fstream f(dir / "v.ckpt", std::ios::in | std::ios::out | std::ios::binary);
    f.seekp(8);
    f.put('\x09');
  }
  CHECK_THROWS_AS(load_checkpoint(dir / "v.ckpt"), IntegrityError);
}

TEST_CASE("checkpoint: config mismatch on fine-tune load needs force") {
  testing::TempDir dir("ft");
  std::vector<std::string> lines = {"alpha beta"};
  const auto vocab = build_vocab(lines, 60);
  const auto p = init_parameters<float>(tiny_config(static_cast<int>(vocab.size())), 8);
  save_checkpoint(dir / "m.ckpt", p, vocab, {});
  auto other = tiny_config(999);
  CHECK_NOTHROW(load_for_finetune(dir / "m.ckpt", other, false)); // vocab size alone is fine
  other.ff = 48;
  log::ScopedCapture cap;
  CHECK_THROWS_AS(load_for_finetune(dir / "m.ckpt", other, false), ConfigError);
  CHECK(cap.warnings().size() >= 1);
  CHECK_NOTHROW(load_for_finetune(dir / "m.ckpt", other, true));
}
