#include "toxbuster/encoder.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "toxbuster/errors.hpp"
#include "toxbuster/hash.hpp"
#include "toxbuster/kernels.hpp"
#include "toxbuster/log.hpp"
#include "toxbuster/rng.hpp"

namespace toxbuster {

// ---------------------------------------------------------------- config

void EncoderConfig::validate() const {
  auto positive = [](int v, const char *name) {
    if (v < 1) throw ConfigError(std::string("encoder ") + name + " must be >= 1, got " + std::to_string(v));
  };
  positive(layers, "layers");
  positive(heads, "heads");
  positive(hidden, "hidden");
  positive(ff, "ff");
  positive(max_len, "max_len");
  positive(vocab_size, "vocab_size");
  positive(n_players, "n_players");
  positive(n_teams, "n_teams");
  positive(n_chat_types, "n_chat_types");
  positive(n_labels, "n_labels");
  if (hidden % heads != 0)
    throw ConfigError("hidden " + std::to_string(hidden) + " not divisible by heads " + std::to_string(heads));
  if (!(dropout >= 0.0 && dropout < 1.0)) throw ConfigError("dropout must lie in [0, 1)");
  if (!(layer_norm_eps > 0.0)) throw ConfigError("layer_norm_eps must be positive");
  if (!(init_std > 0.0)) throw ConfigError("init_std must be positive");
}

std::string EncoderConfig::hash() const {
  nlohmann::json j = *this;
  return to_hex(fnv1a64(j.dump()));
}

void to_json(nlohmann::json &j, const EncoderConfig &c) {
  j = nlohmann::json{{"layers", c.layers},
                     {"heads", c.heads},
                     {"hidden", c.hidden},
                     {"ff", c.ff},
                     {"max_len", c.max_len},
                     {"vocab_size", c.vocab_size},
                     {"n_players", c.n_players},
                     {"n_teams", c.n_teams},
                     {"n_chat_types", c.n_chat_types},
                     {"n_labels", c.n_labels},
                     {"dropout", c.dropout},
                     {"layer_norm_eps", c.layer_norm_eps},
                     {"init_std", c.init_std},
                     {"mode", c.mode == ClassificationMode::TokenLevel ? "token" : "sentence"},
                     {"use_segment", c.use_segment},
                     {"use_team", c.use_team},
                     {"use_chat_type", c.use_chat_type},
                     {"use_player", c.use_player}};
}

void from_json(const nlohmann::json &j, EncoderConfig &c) {
  auto opt = [&](const char *k, auto &field) {
    if (j.contains(k)) j.at(k).get_to(field);
  };
  opt("layers", c.layers);
  opt("heads", c.heads);
  opt("hidden", c.hidden);
  opt("ff", c.ff);
  opt("max_len", c.max_len);
  opt("vocab_size", c.vocab_size);
  opt("n_players", c.n_players);
  opt("n_teams", c.n_teams);
  opt("n_chat_types", c.n_chat_types);
  opt("n_labels", c.n_labels);
  opt("dropout", c.dropout);
  opt("layer_norm_eps", c.layer_norm_eps);
  opt("init_std", c.init_std);
  opt("use_segment", c.use_segment);
  opt("use_team", c.use_team);
  opt("use_chat_type", c.use_chat_type);
  opt("use_player", c.use_player);
  if (j.contains("mode")) {
    const auto m = j.at("mode").get<std::string>();
    if (m == "token") {
      c.mode = ClassificationMode::TokenLevel;
    } else if (m == "sentence") {
      c.mode = ClassificationMode::SentenceLevel;
    } else {
      throw ConfigError("unknown classification mode '" + m + "'");
    }
  }
}

// ---------------------------------------------------------------- layout

ParamLayout::ParamLayout(const EncoderConfig &cfg) {
  cfg.validate();
  const auto d = static_cast<std::size_t>(cfg.hidden);
  const auto ff = static_cast<std::size_t>(cfg.ff);
  token = add("embeddings.token", static_cast<std::size_t>(cfg.vocab_size), d, true);
  position = add("embeddings.position", static_cast<std::size_t>(cfg.max_len), d, true);
  if (cfg.use_segment) segment = add("embeddings.segment", 2, d, true);
  if (cfg.use_team) team = add("embeddings.team", static_cast<std::size_t>(cfg.n_teams), d, true);
  if (cfg.use_chat_type) chat_type = add("embeddings.chat_type", static_cast<std::size_t>(cfg.n_chat_types), d, true);
  if (cfg.use_player) player = add("embeddings.player", static_cast<std::size_t>(cfg.n_players), d, true);
  emb_ln_g = add("embeddings.ln.gain", 1, d);
  emb_ln_b = add("embeddings.ln.bias", 1, d);
  for (int l = 0; l < cfg.layers; ++l) {
    const std::string p = "layer" + std::to_string(l) + ".";
    Layer L{};
    L.wq = add(p + "attn.wq", d, d);
    L.bq = add(p + "attn.bq", 1, d);
    L.wk = add(p + "attn.wk", d, d);
    L.bk = add(p + "attn.bk", 1, d);
    L.wv = add(p + "attn.wv", d, d);
    L.bv = add(p + "attn.bv", 1, d);
    L.wo = add(p + "attn.wo", d, d);
    L.bo = add(p + "attn.bo", 1, d);
    L.ln1_g = add(p + "ln1.gain", 1, d);
    L.ln1_b = add(p + "ln1.bias", 1, d);
    L.w1 = add(p + "ffn.w1", d, ff);
    L.b1 = add(p + "ffn.b1", 1, ff);
    L.w2 = add(p + "ffn.w2", ff, d);
    L.b2 = add(p + "ffn.b2", 1, d);
    L.ln2_g = add(p + "ln2.gain", 1, d);
    L.ln2_b = add(p + "ln2.bias", 1, d);
    layers.push_back(L);
  }
  if (cfg.mode == ClassificationMode::SentenceLevel) {
    pooler_w = add("pooler.w", d, d);
    pooler_b = add("pooler.b", 1, d);
  }
  head_w = add("head.w", d, static_cast<std::size_t>(cfg.n_labels));
  head_b = add("head.b", 1, static_cast<std::size_t>(cfg.n_labels));
}

int ParamLayout::add(std::string name, std::size_t rows, std::size_t cols, bool embedding) {
  specs_.push_back({std::move(name), rows, cols, embedding});
  return static_cast<int>(specs_.size() - 1);
}

std::size_t ParamLayout::total_size() const {
  std::size_t n = 0;
  for (const auto &s : specs_) n += s.size();
  return n;
}

int ParamLayout::find(const std::string &name) const {
  for (std::size_t i = 0; i < specs_.size(); ++i)
    if (specs_[i].name == name) return static_cast<int>(i);
  return -1;
}

// ---------------------------------------------------------------- parameters

template <typename T> std::vector<T> &Parameters<T>::named(const std::string &name) {
  const int idx = layout->find(name);
  if (idx < 0) throw NotFoundError("no parameter tensor named '" + name + "'");
  return at(idx);
}

template <typename T> bool Parameters<T>::all_finite() const {
  for (const auto &t : tensors)
    for (T v : t)
      if (!std::isfinite(v)) return false;
  return true;
}

template <typename T> Parameters<T> init_parameters(const EncoderConfig &cfg, std::uint64_t seed) {
  Parameters<T> p;
  p.config = cfg;
  p.layout = std::make_shared<const ParamLayout>(cfg);
  const ParamLayout &L = *p.layout;
  Rng rng(seed);
  const std::vector<int> metadata = {L.team, L.chat_type, L.player};
  for (std::size_t i = 0; i < L.count(); ++i) {
    const auto &spec = L.specs()[i];
    std::vector<T> t(spec.size(), T(0));
    const bool zero_table = std::find(metadata.begin(), metadata.end(), static_cast<int>(i)) != metadata.end();
    const bool is_gain = spec.name.ends_with(".gain");
    const bool is_bias = spec.rows == 1 && !is_gain;
    if (is_gain) {
      std::fill(t.begin(), t.end(), T(1));
    } else if (!zero_table && !is_bias) {
      // Metadata tables and biases draw nothing, so enabling a zeroed metadata
      // table leaves every other tensor's initial values unchanged.
      for (auto &v : t) v = static_cast<T>(rng.normal() * cfg.init_std);
    }
    p.tensors.push_back(std::move(t));
  }
  return p;
}

template <typename To, typename From> Parameters<To> cast_parameters(const Parameters<From> &p) {
  Parameters<To> out;
  out.config = p.config;
  out.layout = p.layout;
  for (const auto &t : p.tensors) out.tensors.emplace_back(t.begin(), t.end());
  return out;
}

// ---------------------------------------------------------------- gradients

template <typename T> Gradients<T>::Gradients(std::shared_ptr<const ParamLayout> layout) : layout_(std::move(layout)) {
  for (const auto &s : layout_->specs()) {
    tensors_.emplace_back(s.size(), T(0));
    touched_.emplace_back();
    touched_mask_.emplace_back(s.embedding ? s.rows : 0, 0);
  }
}

template <typename T> void Gradients<T>::add_row(int idx, std::size_t row, std::span<const T> values) {
  const auto i = static_cast<std::size_t>(idx);
  const auto &spec = layout_->specs()[i];
  if (!touched_mask_[i][row]) {
    touched_mask_[i][row] = 1;
    touched_[i].push_back(row);
  }
  T *dst = tensors_[i].data() + row * spec.cols;
  for (std::size_t j = 0; j < spec.cols; ++j) dst[j] += values[j];
}

template <typename T> void Gradients<T>::clear() {
  for (std::size_t i = 0; i < tensors_.size(); ++i) {
    const auto &spec = layout_->specs()[i];
    if (!spec.embedding) {
      std::fill(tensors_[i].begin(), tensors_[i].end(), T(0));
      continue;
    }
    for (std::size_t r : touched_[i]) {
      std::fill_n(tensors_[i].begin() + static_cast<std::ptrdiff_t>(r * spec.cols), spec.cols, T(0));
      touched_mask_[i][r] = 0;
    }
    touched_[i].clear();
  }
}

template <typename T> void Gradients<T>::accumulate(const Gradients &other) {
  for (std::size_t i = 0; i < tensors_.size(); ++i) {
    const auto &spec = layout_->specs()[i];
    if (!spec.embedding) {
      T *dst = tensors_[i].data();
      const T *src = other.tensors_[i].data();
      for (std::size_t j = 0; j < tensors_[i].size(); ++j) dst[j] += src[j];
      continue;
    }
    for (std::size_t r : other.touched_[i])
      add_row(static_cast<int>(i), r, std::span<const T>(other.tensors_[i].data() + r * spec.cols, spec.cols));
  }
}

// ---------------------------------------------------------------- forward

template <typename T> struct LayerCache {
  Matrix<T> input;          // L x d
  std::vector<T> q, k, v;   // heads x L x dh
  std::vector<T> probs;     // heads x L x L
  Matrix<T> ctx;            // L x d
  std::vector<T> attn_mask; // dropout multipliers on the attention output, empty when off
  Matrix<T> ln1_xhat;
  std::vector<T> ln1_rstd;
  Matrix<T> h1;
  Matrix<T> f1;  // pre-activation, L x ff
  Matrix<T> act; // gelu(f1)
  std::vector<T> ffn_mask;
  Matrix<T> ln2_xhat;
  std::vector<T> ln2_rstd;
};

template <typename T> struct Activations {
  std::size_t length = 0;
  Matrix<T> emb_xhat;
  std::vector<T> emb_rstd;
  std::vector<T> emb_mask;
  std::vector<LayerCache<T>> layers;
  Matrix<T> output; // final hidden states
  Matrix<T> pooled; // 1 x d, sentence level only
};

namespace {

template <typename T> std::span<const T> cspan(const std::vector<T> &v) { return {v.data(), v.size()}; }
template <typename T> std::span<T> mspan(std::vector<T> &v) { return {v.data(), v.size()}; }

void check_ids(const std::vector<int> &ids, std::size_t rows, const char *table) {
  for (std::size_t t = 0; t < ids.size(); ++t) {
    if (ids[t] < 0 || static_cast<std::size_t>(ids[t]) >= rows)
      throw ConfigError(std::string("id ") + std::to_string(ids[t]) + " at position " + std::to_string(t) +
                        " outside the " + table + " table of " + std::to_string(rows) + " rows");
  }
}

template <typename T> void validate_input(const EncoderInput &in, const Parameters<T> &p) {
  const ParamLayout &L = *p.layout;
  const std::size_t n = in.size();
  if (n == 0) throw ConfigError("empty encoder input");
  for (const auto *seq : {&in.position_ids, &in.segment_ids, &in.team_ids, &in.chat_type_ids, &in.player_ids})
    if (seq->size() != n) throw ConfigError("encoder input sequences differ in length");
  auto rows = [&](int idx) { return L.specs()[static_cast<std::size_t>(idx)].rows; };
  check_ids(in.token_ids, rows(L.token), "token");
  check_ids(in.position_ids, rows(L.position), "position");
  if (L.segment >= 0) check_ids(in.segment_ids, rows(L.segment), "segment");
  if (L.team >= 0) check_ids(in.team_ids, rows(L.team), "team");
  if (L.chat_type >= 0) check_ids(in.chat_type_ids, rows(L.chat_type), "chat_type");
  if (L.player >= 0) check_ids(in.player_ids, rows(L.player), "player");
}

// y = g * (x - mean) / sqrt(var + eps) + b, row-wise; keeps xhat and 1/sigma.
template <typename T>
void layer_norm(const Matrix<T> &x, const std::vector<T> &g, const std::vector<T> &b, T eps, Matrix<T> &y,
                Matrix<T> &xhat, std::vector<T> &rstd) {
  const std::size_t n = x.rows, d = x.cols;
  y = Matrix<T>(n, d);
  xhat = Matrix<T>(n, d);
  rstd.assign(n, T(0));
  for (std::size_t i = 0; i < n; ++i) {
    const T *xi = x.data.data() + i * d;
    T mean = 0;
    for (std::size_t j = 0; j < d; ++j) mean += xi[j];
    mean /= static_cast<T>(d);
    T var = 0;
    for (std::size_t j = 0; j < d; ++j) var += (xi[j] - mean) * (xi[j] - mean);
    var /= static_cast<T>(d);
    const T r = T(1) / std::sqrt(var + eps);
    rstd[i] = r;
    for (std::size_t j = 0; j < d; ++j) {
      const T h = (xi[j] - mean) * r;
      xhat(i, j) = h;
      y(i, j) = g[j] * h + b[j];
    }
  }
}

// dx from dy; accumulates dg and db.
template <typename T>
Matrix<T> layer_norm_backward(const Matrix<T> &dy, const Matrix<T> &xhat, const std::vector<T> &rstd,
                              const std::vector<T> &g, std::vector<T> &dg, std::vector<T> &db) {
  const std::size_t n = dy.rows, d = dy.cols;
  Matrix<T> dx(n, d);
  std::vector<T> dxhat(d);
  for (std::size_t i = 0; i < n; ++i) {
    T mean_dxhat = 0, mean_dxhat_xhat = 0;
    for (std::size_t j = 0; j < d; ++j) {
      dg[j] += dy(i, j) * xhat(i, j);
      db[j] += dy(i, j);
      dxhat[j] = dy(i, j) * g[j];
      mean_dxhat += dxhat[j];
      mean_dxhat_xhat += dxhat[j] * xhat(i, j);
    }
    mean_dxhat /= static_cast<T>(d);
    mean_dxhat_xhat /= static_cast<T>(d);
    for (std::size_t j = 0; j < d; ++j) dx(i, j) = rstd[i] * (dxhat[j] - mean_dxhat - xhat(i, j) * mean_dxhat_xhat);
  }
  return dx;
}

template <typename T> std::vector<T> dropout_mask(std::size_t n, double p, std::uint64_t seed, std::uint64_t site) {
  std::vector<T> mask(n);
  Rng rng(mix_seed(seed, site));
  const T keep = static_cast<T>(1.0 / (1.0 - p));
  for (auto &m : mask) m = rng.uniform() < p ? T(0) : keep;
  return mask;
}

template <typename T> void apply_mask(Matrix<T> &x, const std::vector<T> &mask) {
  if (mask.empty()) return;
  for (std::size_t i = 0; i < x.data.size(); ++i) x.data[i] *= mask[i];
}

// y = x W + b
template <typename T>
Matrix<T> affine(const Matrix<T> &x, const std::vector<T> &w, const std::vector<T> &b, std::size_t out) {
  Matrix<T> y(x.rows, out);
  kernels::matmul<T>(cspan(x.data), cspan(w), mspan(y.data), x.rows, x.cols, out);
  kernels::add_row_bias<T>(mspan(y.data), cspan(b), x.rows, out);
  return y;
}

// dx (+)= dy W^T, dW += x^T dy, db += colsum(dy)
template <typename T>
void affine_backward(const Matrix<T> &x, const Matrix<T> &dy, const std::vector<T> &w, std::vector<T> &dw,
                     std::vector<T> &db, Matrix<T> &dx, bool accumulate_dx) {
  kernels::matmul_tn<T>(cspan(x.data), cspan(dy.data), mspan(dw), x.cols, x.rows, dy.cols, true);
  kernels::column_sums<T>(cspan(dy.data), mspan(db), dy.rows, dy.cols);
  if (!accumulate_dx) dx = Matrix<T>(x.rows, x.cols);
  kernels::matmul_nt<T>(cspan(dy.data), cspan(w), mspan(dx.data), dy.rows, dy.cols, x.cols, accumulate_dx);
}

// L x d -> heads x L x dh and back.
template <typename T> std::vector<T> split_heads(const Matrix<T> &x, std::size_t heads) {
  const std::size_t n = x.rows, dh = x.cols / heads;
  std::vector<T> out(x.data.size());
  for (std::size_t h = 0; h < heads; ++h)
    for (std::size_t i = 0; i < n; ++i)
      std::copy_n(x.data.data() + i * x.cols + h * dh, dh, out.data() + (h * n + i) * dh);
  return out;
}

template <typename T> Matrix<T> merge_heads(const std::vector<T> &x, std::size_t n, std::size_t heads, std::size_t dh) {
  Matrix<T> out(n, heads * dh);
  for (std::size_t h = 0; h < heads; ++h)
    for (std::size_t i = 0; i < n; ++i)
      std::copy_n(x.data() + (h * n + i) * dh, dh, out.data.data() + i * out.cols + h * dh);
  return out;
}

template <typename T> void require_finite(const Matrix<T> &x, const std::string &where) {
  for (T v : x.data)
    if (!std::isfinite(v)) throw NumericError("non-finite activation in " + where);
}

constexpr std::uint64_t kEmbeddingSite = 0;
std::uint64_t attention_site(int layer) { return 1 + 2 * static_cast<std::uint64_t>(layer); }
std::uint64_t ffn_site(int layer) { return 2 + 2 * static_cast<std::uint64_t>(layer); }

} // namespace

template <typename T> Matrix<T> embedding_sum(const EncoderInput &input, const Parameters<T> &params) {
  validate_input(input, params);
  const ParamLayout &L = *params.layout;
  const std::size_t n = input.size(), d = static_cast<std::size_t>(params.config.hidden);
  Matrix<T> x(n, d);
  auto add = [&](int table, const std::vector<int> &ids) {
    if (table < 0) return;
    const auto &t = params.at(table);
    for (std::size_t i = 0; i < n; ++i) {
      const T *row = t.data() + static_cast<std::size_t>(ids[i]) * d;
      T *xi = x.data.data() + i * d;
      for (std::size_t j = 0; j < d; ++j) xi[j] += row[j];
    }
  };
  add(L.token, input.token_ids);
  add(L.position, input.position_ids);
  add(L.segment, input.segment_ids);
  add(L.team, input.team_ids);
  add(L.chat_type, input.chat_type_ids);
  add(L.player, input.player_ids);
  return x;
}

namespace {

template <typename T>
Matrix<T> embed_cached(const EncoderInput &input, const Parameters<T> &params, const ForwardOptions &opts,
                       Activations<T> &cache) {
  const ParamLayout &L = *params.layout;
  const Matrix<T> x = embedding_sum(input, params);
  Matrix<T> y;
  layer_norm(x, params.at(L.emb_ln_g), params.at(L.emb_ln_b), static_cast<T>(params.config.layer_norm_eps), y,
             cache.emb_xhat, cache.emb_rstd);
  if (opts.training && params.config.dropout > 0.0) {
    cache.emb_mask = dropout_mask<T>(y.data.size(), params.config.dropout, opts.dropout_seed, kEmbeddingSite);
    apply_mask(y, cache.emb_mask);
  }
  return y;
}

} // namespace

template <typename T>
Matrix<T> embed(const EncoderInput &input, const Parameters<T> &params, const ForwardOptions &opts) {
  Activations<T> cache;
  return embed_cached(input, params, opts, cache);
}

template <typename T>
ForwardResult<T> forward(const EncoderInput &input, const Parameters<T> &params, const ForwardOptions &opts) {
  const EncoderConfig &cfg = params.config;
  const ParamLayout &PL = *params.layout;
  auto cache = std::make_shared<Activations<T>>();
  const std::size_t n = input.size();
  const std::size_t d = static_cast<std::size_t>(cfg.hidden);
  const std::size_t heads = static_cast<std::size_t>(cfg.heads);
  const std::size_t dh = d / heads;
  const std::size_t ff = static_cast<std::size_t>(cfg.ff);
  const T scale = T(1) / std::sqrt(static_cast<T>(dh));
  const T eps = static_cast<T>(cfg.layer_norm_eps);
  const bool drop = opts.training && cfg.dropout > 0.0;
  cache->length = n;

  Matrix<T> h = embed_cached(input, params, opts, *cache);
  require_finite(h, "embeddings");

  std::vector<char> key_valid(n);
  for (std::size_t j = 0; j < n; ++j) key_valid[j] = input.token_ids[j] != static_cast<int>(Special::Pad);

  for (int l = 0; l < cfg.layers; ++l) {
    const auto &W = PL.layers[static_cast<std::size_t>(l)];
    LayerCache<T> lc;
    lc.input = h;
    lc.q = split_heads(affine(h, params.at(W.wq), params.at(W.bq), d), heads);
    lc.k = split_heads(affine(h, params.at(W.wk), params.at(W.bk), d), heads);
    lc.v = split_heads(affine(h, params.at(W.wv), params.at(W.bv), d), heads);
    lc.probs.assign(heads * n * n, T(0));
    std::vector<T> ctx(heads * n * dh);
    for (std::size_t hd = 0; hd < heads; ++hd) {
      std::span<const T> qh(lc.q.data() + hd * n * dh, n * dh);
      std::span<const T> kh(lc.k.data() + hd * n * dh, n * dh);
      std::span<const T> vh(lc.v.data() + hd * n * dh, n * dh);
      std::span<T> p(lc.probs.data() + hd * n * n, n * n);
      kernels::matmul_nt<T>(qh, kh, p, n, dh, n);
      for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
          T &s = p[i * n + j];
          s = key_valid[j] ? s * scale : -std::numeric_limits<T>::infinity();
        }
      }
      kernels::softmax_rows<T>(p, n, n);
      kernels::matmul<T>(std::span<const T>(p.data(), p.size()), vh, std::span<T>(ctx.data() + hd * n * dh, n * dh),
                         n, n, dh);
    }
    lc.ctx = merge_heads(ctx, n, heads, dh);
    Matrix<T> attn = affine(lc.ctx, params.at(W.wo), params.at(W.bo), d);
    if (drop) {
      lc.attn_mask = dropout_mask<T>(attn.data.size(), cfg.dropout, opts.dropout_seed, attention_site(l));
      apply_mask(attn, lc.attn_mask);
    }
    for (std::size_t i = 0; i < attn.data.size(); ++i) attn.data[i] += h.data[i];
    layer_norm(attn, params.at(W.ln1_g), params.at(W.ln1_b), eps, lc.h1, lc.ln1_xhat, lc.ln1_rstd);

    lc.f1 = affine(lc.h1, params.at(W.w1), params.at(W.b1), ff);
    lc.act = Matrix<T>(n, ff);
    for (std::size_t i = 0; i < lc.f1.data.size(); ++i) lc.act.data[i] = kernels::gelu(lc.f1.data[i]);
    Matrix<T> f2 = affine(lc.act, params.at(W.w2), params.at(W.b2), d);
    if (drop) {
      lc.ffn_mask = dropout_mask<T>(f2.data.size(), cfg.dropout, opts.dropout_seed, ffn_site(l));
      apply_mask(f2, lc.ffn_mask);
    }
    for (std::size_t i = 0; i < f2.data.size(); ++i) f2.data[i] += lc.h1.data[i];
    layer_norm(f2, params.at(W.ln2_g), params.at(W.ln2_b), eps, h, lc.ln2_xhat, lc.ln2_rstd);
    require_finite(h, "layer " + std::to_string(l));
    cache->layers.push_back(std::move(lc));
  }
  cache->output = h;

  ForwardResult<T> result;
  const std::size_t labels = static_cast<std::size_t>(cfg.n_labels);
  if (cfg.mode == ClassificationMode::SentenceLevel) {
    Matrix<T> first(1, d);
    std::copy_n(h.data.begin(), d, first.data.begin());
    cache->pooled = affine(first, params.at(PL.pooler_w), params.at(PL.pooler_b), d);
    for (auto &v : cache->pooled.data) v = std::tanh(v);
    result.logits = affine(cache->pooled, params.at(PL.head_w), params.at(PL.head_b), labels);
  } else {
    result.logits = affine(h, params.at(PL.head_w), params.at(PL.head_b), labels);
  }
  require_finite(result.logits, "classification head");
  result.cache = std::move(cache);
  return result;
}

template <typename T> Matrix<T> probabilities(const Matrix<T> &logits) {
  Matrix<T> p = logits;
  kernels::softmax_rows<T>(mspan(p.data), p.rows, p.cols);
  return p;
}

template <typename T> T cross_entropy(const Matrix<T> &logits, std::span<const int> labels) {
  if (labels.size() != logits.rows)
    throw ConfigError("label count " + std::to_string(labels.size()) + " differs from score rows " +
                      std::to_string(logits.rows));
  T total = 0;
  std::size_t count = 0;
  for (std::size_t i = 0; i < logits.rows; ++i) {
    if (labels[i] == kIgnoreLabel) continue;
    const auto row = logits.row(i);
    const T mx = *std::max_element(row.begin(), row.end());
    T sum = 0;
    for (T v : row) sum += std::exp(v - mx);
    total += std::log(sum) + mx - row[static_cast<std::size_t>(labels[i])];
    ++count;
  }
  if (count == 0) {
    log::warn("cross entropy over zero labeled positions; returning 0");
    return T(0);
  }
  return total / static_cast<T>(count);
}

std::vector<int> target_labels(const EncoderInput &input, ClassificationMode mode) {
  if (mode == ClassificationMode::SentenceLevel) return {sentence_label(input)};
  return input.label_ids;
}

// ---------------------------------------------------------------- backward

template <typename T>
void backward(const ForwardResult<T> &fwd, const EncoderInput &input, std::span<const int> labels,
              const Parameters<T> &params, T loss_scale, Gradients<T> &grads) {
  const EncoderConfig &cfg = params.config;
  const ParamLayout &PL = *params.layout;
  const Activations<T> &c = *fwd.cache;
  const std::size_t n = c.length;
  const std::size_t d = static_cast<std::size_t>(cfg.hidden);
  const std::size_t heads = static_cast<std::size_t>(cfg.heads);
  const std::size_t dh = d / heads;
  const T scale = T(1) / std::sqrt(static_cast<T>(dh));
  if (labels.size() != fwd.logits.rows) throw ConfigError("label count differs from score rows");

  // dL/dlogits = scale * (softmax - onehot) on labeled rows.
  Matrix<T> dlogits = probabilities(fwd.logits);
  for (std::size_t i = 0; i < dlogits.rows; ++i) {
    auto row = dlogits.row(i);
    if (labels[i] == kIgnoreLabel) {
      std::fill(row.begin(), row.end(), T(0));
      continue;
    }
    row[static_cast<std::size_t>(labels[i])] -= T(1);
    for (auto &v : row) v *= loss_scale;
  }

  Matrix<T> grad_h;
  if (cfg.mode == ClassificationMode::SentenceLevel) {
    Matrix<T> dpooled;
    affine_backward(c.pooled, dlogits, params.at(PL.head_w), grads.at(PL.head_w), grads.at(PL.head_b), dpooled, false);
    for (std::size_t j = 0; j < d; ++j) dpooled.data[j] *= T(1) - c.pooled.data[j] * c.pooled.data[j];
    Matrix<T> first(1, d);
    std::copy_n(c.output.data.begin(), d, first.data.begin());
    Matrix<T> dfirst;
    affine_backward(first, dpooled, params.at(PL.pooler_w), grads.at(PL.pooler_w), grads.at(PL.pooler_b), dfirst,
                    false);
    grad_h = Matrix<T>(n, d);
    std::copy_n(dfirst.data.begin(), d, grad_h.data.begin());
  } else {
    affine_backward(c.output, dlogits, params.at(PL.head_w), grads.at(PL.head_w), grads.at(PL.head_b), grad_h, false);
  }

  for (int l = cfg.layers - 1; l >= 0; --l) {
    const auto &W = PL.layers[static_cast<std::size_t>(l)];
    const LayerCache<T> &lc = c.layers[static_cast<std::size_t>(l)];

    // Feed-forward block.
    Matrix<T> dr2 = layer_norm_backward(grad_h, lc.ln2_xhat, lc.ln2_rstd, params.at(W.ln2_g), grads.at(W.ln2_g),
                                        grads.at(W.ln2_b));
    Matrix<T> df2 = dr2;
    apply_mask(df2, lc.ffn_mask);
    Matrix<T> dact;
    affine_backward(lc.act, df2, params.at(W.w2), grads.at(W.w2), grads.at(W.b2), dact, false);
    for (std::size_t i = 0; i < dact.data.size(); ++i) dact.data[i] *= kernels::gelu_grad(lc.f1.data[i]);
    Matrix<T> dh1 = dr2;
    affine_backward(lc.h1, dact, params.at(W.w1), grads.at(W.w1), grads.at(W.b1), dh1, true);

    // Attention block.
    Matrix<T> dr1 = layer_norm_backward(dh1, lc.ln1_xhat, lc.ln1_rstd, params.at(W.ln1_g), grads.at(W.ln1_g),
                                        grads.at(W.ln1_b));
    Matrix<T> dattn = dr1;
    apply_mask(dattn, lc.attn_mask);
    Matrix<T> dctx;
    affine_backward(lc.ctx, dattn, params.at(W.wo), grads.at(W.wo), grads.at(W.bo), dctx, false);

    const std::vector<T> dctx_h = split_heads(dctx, heads);
    std::vector<T> dq(heads * n * dh), dk(heads * n * dh), dv(heads * n * dh);
    std::vector<T> dp(n * n);
    for (std::size_t hd = 0; hd < heads; ++hd) {
      const std::size_t off = hd * n * dh;
      std::span<const T> qh(lc.q.data() + off, n * dh);
      std::span<const T> kh(lc.k.data() + off, n * dh);
      std::span<const T> vh(lc.v.data() + off, n * dh);
      std::span<const T> dch(dctx_h.data() + off, n * dh);
      std::span<const T> p(lc.probs.data() + hd * n * n, n * n);
      kernels::matmul_nt<T>(dch, vh, mspan(dp), n, dh, n);
      kernels::matmul_tn<T>(p, dch, std::span<T>(dv.data() + off, n * dh), n, n, dh);
      for (std::size_t i = 0; i < n; ++i) {
        T dot = 0;
        for (std::size_t j = 0; j < n; ++j) dot += dp[i * n + j] * p[i * n + j];
        for (std::size_t j = 0; j < n; ++j) dp[i * n + j] = p[i * n + j] * (dp[i * n + j] - dot) * scale;
      }
      kernels::matmul<T>(cspan(dp), kh, std::span<T>(dq.data() + off, n * dh), n, n, dh);
      kernels::matmul_tn<T>(cspan(dp), qh, std::span<T>(dk.data() + off, n * dh), n, n, dh);
    }
    Matrix<T> dx = dr1;
    affine_backward(lc.input, merge_heads(dq, n, heads, dh), params.at(W.wq), grads.at(W.wq), grads.at(W.bq), dx, true);
    affine_backward(lc.input, merge_heads(dk, n, heads, dh), params.at(W.wk), grads.at(W.wk), grads.at(W.bk), dx, true);
    affine_backward(lc.input, merge_heads(dv, n, heads, dh), params.at(W.wv), grads.at(W.wv), grads.at(W.bv), dx, true);
    grad_h = std::move(dx);
  }

  apply_mask(grad_h, c.emb_mask);
  Matrix<T> dx0 = layer_norm_backward(grad_h, c.emb_xhat, c.emb_rstd, params.at(PL.emb_ln_g), grads.at(PL.emb_ln_g),
                                      grads.at(PL.emb_ln_b));
  auto scatter = [&](int table, const std::vector<int> &ids) {
    if (table < 0) return;
    for (std::size_t i = 0; i < n; ++i) grads.add_row(table, static_cast<std::size_t>(ids[i]), dx0.row(i));
  };
  scatter(PL.token, input.token_ids);
  scatter(PL.position, input.position_ids);
  scatter(PL.segment, input.segment_ids);
  scatter(PL.team, input.team_ids);
  scatter(PL.chat_type, input.chat_type_ids);
  scatter(PL.player, input.player_ids);
}

// ---------------------------------------------------------------- gradient check

GradCheckReport check_gradients(const EncoderInput &input, const Parameters<double> &params, double eps, double tol,
                                std::size_t samples_per_tensor, std::uint64_t seed, double denominator_floor) {
  const auto labels = target_labels(input, params.config.mode);
  const std::size_t labeled = static_cast<std::size_t>(
      std::count_if(labels.begin(), labels.end(), [](int l) { return l != kIgnoreLabel; }));
  if (labeled == 0) throw ConfigError("gradient check needs at least one labeled position");

  Gradients<double> grads(params.layout);
  const auto fwd = forward(input, params);
  backward(fwd, input, std::span<const int>(labels), params, 1.0 / static_cast<double>(labeled), grads);

  Parameters<double> probe = params;
  auto loss_at = [&]() { return cross_entropy(forward(input, probe).logits, std::span<const int>(labels)); };

  const ParamLayout &L = *params.layout;
  auto ids_for = [&](int idx) -> const std::vector<int> * {
    if (idx == L.token) return &input.token_ids;
    if (idx == L.position) return &input.position_ids;
    if (idx == L.segment) return &input.segment_ids;
    if (idx == L.team) return &input.team_ids;
    if (idx == L.chat_type) return &input.chat_type_ids;
    if (idx == L.player) return &input.player_ids;
    return nullptr;
  };

  Rng rng(seed);
  GradCheckReport report;
  report.worst.rel_error = -1.0;
  for (std::size_t t = 0; t < L.count(); ++t) {
    const auto &spec = L.specs()[t];
    std::vector<std::size_t> candidates;
    if (const auto *ids = ids_for(static_cast<int>(t))) {
      std::vector<int> rows(ids->begin(), ids->end());
      std::sort(rows.begin(), rows.end());
      rows.erase(std::unique(rows.begin(), rows.end()), rows.end());
      for (int r : rows)
        for (std::size_t j = 0; j < spec.cols; ++j) candidates.push_back(static_cast<std::size_t>(r) * spec.cols + j);
    } else {
      candidates.resize(spec.size());
      std::iota(candidates.begin(), candidates.end(), std::size_t{0});
    }
    rng.shuffle(candidates);
    if (candidates.size() > samples_per_tensor) candidates.resize(samples_per_tensor);

    bool tensor_failed = false;
    for (std::size_t idx : candidates) {
      double &x = probe.tensors[t][idx];
      const double saved = x;
      x = saved + eps;
      const double up = loss_at();
      x = saved - eps;
      const double down = loss_at();
      x = saved;
      GradCheckEntry e;
      e.tensor = spec.name;
      e.index = idx;
      e.analytic = grads.at(static_cast<int>(t))[idx];
      e.numeric = (up - down) / (2.0 * eps);
      e.rel_error = std::abs(e.analytic - e.numeric) /
                    std::max({std::abs(e.analytic), std::abs(e.numeric), denominator_floor});
      ++report.checked;
      if (e.rel_error > report.worst.rel_error) report.worst = e;
      if (!(e.rel_error < tol)) tensor_failed = true;
      report.entries.push_back(std::move(e));
    }
    if (tensor_failed) {
      report.passed = false;
      report.failing_tensors.push_back(spec.name);
    }
  }
  return report;
}

// ---------------------------------------------------------------- instantiations

#define TOXBUSTER_INSTANTIATE(T)                                                                                     \
  template struct Parameters<T>;                                                                                     \
  template class Gradients<T>;                                                                                       \
  template Parameters<T> init_parameters<T>(const EncoderConfig &, std::uint64_t);                                   \
  template Matrix<T> embedding_sum<T>(const EncoderInput &, const Parameters<T> &);                                  \
  template Matrix<T> embed<T>(const EncoderInput &, const Parameters<T> &, const ForwardOptions &);                  \
  template ForwardResult<T> forward<T>(const EncoderInput &, const Parameters<T> &, const ForwardOptions &);         \
  template Matrix<T> probabilities<T>(const Matrix<T> &);                                                            \
  template T cross_entropy<T>(const Matrix<T> &, std::span<const int>);                                              \
  template void backward<T>(const ForwardResult<T> &, const EncoderInput &, std::span<const int>,                    \
                            const Parameters<T> &, T, Gradients<T> &);

TOXBUSTER_INSTANTIATE(float)
TOXBUSTER_INSTANTIATE(double)
#undef TOXBUSTER_INSTANTIATE

template Parameters<double> cast_parameters<double, float>(const Parameters<float> &);
template Parameters<float> cast_parameters<float, double>(const Parameters<double> &);
template Parameters<float> cast_parameters<float, float>(const Parameters<float> &);
template Parameters<double> cast_parameters<double, double>(const Parameters<double> &);

} // namespace toxbuster
