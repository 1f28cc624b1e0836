#pragma once

#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "toxbuster/category.hpp"
#include "toxbuster/tokenizer.hpp"

namespace toxbuster {

enum class ClassificationMode { TokenLevel, SentenceLevel };

struct EncoderConfig {
  int layers = 2;
  int heads = 4;
  int hidden = 128;
  int ff = 512;
  int max_len = 512;
  int vocab_size = 0;
  int n_players = kDefaultMaxSpeakers;
  int n_teams = 2;
  int n_chat_types = 2;
  int n_labels = kNumLabels;
  double dropout = 0.1;
  double layer_norm_eps = 1e-12;
  double init_std = 0.02;
  ClassificationMode mode = ClassificationMode::TokenLevel;
  // Embedding tables summed into each token's input; disabled tables ignore their ids.
  bool use_segment = true;
  bool use_team = true;
  bool use_chat_type = true;
  bool use_player = true;

  void validate() const; // throws ConfigError
  /// FNV-1a over the canonical JSON form, hex encoded.
  std::string hash() const;
  bool operator==(const EncoderConfig &) const = default;
};

void to_json(nlohmann::json &j, const EncoderConfig &c);
void from_json(const nlohmann::json &j, EncoderConfig &c);

struct TensorSpec {
  std::string name;
  std::size_t rows = 0;
  std::size_t cols = 0;
  bool embedding = false; // row-sparse gradient (lookup table)

  std::size_t size() const { return rows * cols; }
};

/// Declared tensor order; identical for every instance of a configuration.
class ParamLayout {
public:
  explicit ParamLayout(const EncoderConfig &cfg);

  const std::vector<TensorSpec> &specs() const { return specs_; }
  std::size_t count() const { return specs_.size(); }
  std::size_t total_size() const;
  int find(const std::string &name) const; // -1 when absent

  struct Layer {
    int wq, bq, wk, bk, wv, bv, wo, bo, ln1_g, ln1_b, w1, b1, w2, b2, ln2_g, ln2_b;
  };
  int token = -1, position = -1, segment = -1, team = -1, chat_type = -1, player = -1;
  int emb_ln_g = -1, emb_ln_b = -1;
  std::vector<Layer> layers;
  int pooler_w = -1, pooler_b = -1;
  int head_w = -1, head_b = -1;

private:
  int add(std::string name, std::size_t rows, std::size_t cols, bool embedding = false);
  std::vector<TensorSpec> specs_;
};

template <typename T> struct Parameters {
  EncoderConfig config;
  std::shared_ptr<const ParamLayout> layout;
  std::vector<std::vector<T>> tensors;

  std::vector<T> &at(int idx) { return tensors[static_cast<std::size_t>(idx)]; }
  const std::vector<T> &at(int idx) const { return tensors[static_cast<std::size_t>(idx)]; }
  std::vector<T> &named(const std::string &name);
  bool all_finite() const;
};

/// Token/position/segment tables and dense weights ~ N(0, init_std); biases and
/// metadata tables (team, chat type, player) zero; layer-norm gains one.
template <typename T> Parameters<T> init_parameters(const EncoderConfig &cfg, std::uint64_t seed);

template <typename To, typename From> Parameters<To> cast_parameters(const Parameters<From> &p);

/// Gradient buffers matching a layout. Embedding tables track touched rows so
/// clearing and reduction only visit rows that appeared in the input.
template <typename T> class Gradients {
public:
  Gradients() = default;
  explicit Gradients(std::shared_ptr<const ParamLayout> layout);

  std::vector<T> &at(int idx) { return tensors_[static_cast<std::size_t>(idx)]; }
  const std::vector<T> &at(int idx) const { return tensors_[static_cast<std::size_t>(idx)]; }
  std::size_t count() const { return tensors_.size(); }
  const ParamLayout &layout() const { return *layout_; }

  /// Adds `values` into row `row` of embedding tensor `idx`.
  void add_row(int idx, std::size_t row, std::span<const T> values);
  const std::vector<std::size_t> &touched_rows(int idx) const { return touched_[static_cast<std::size_t>(idx)]; }

  void clear();
  /// this += other
  void accumulate(const Gradients &other);

private:
  std::shared_ptr<const ParamLayout> layout_;
  std::vector<std::vector<T>> tensors_;
  std::vector<std::vector<std::size_t>> touched_;
  std::vector<std::vector<char>> touched_mask_;
};

struct ForwardOptions {
  bool training = false;           // applies dropout when true
  std::uint64_t dropout_seed = 0;  // masks are a pure function of this seed
};

/// Row-major rows x cols.
template <typename T> struct Matrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<T> data;

  Matrix() = default;
  Matrix(std::size_t r, std::size_t c) : rows(r), cols(c), data(r * c) {}
  T &operator()(std::size_t i, std::size_t j) { return data[i * cols + j]; }
  const T &operator()(std::size_t i, std::size_t j) const { return data[i * cols + j]; }
  std::span<T> row(std::size_t i) { return {data.data() + i * cols, cols}; }
  std::span<const T> row(std::size_t i) const { return {data.data() + i * cols, cols}; }
};

template <typename T> struct Activations; // forward cache, defined in encoder.cpp

/// Result of a forward pass: class scores (logits) and the cache for backward.
template <typename T> struct ForwardResult {
  Matrix<T> logits; // L x n_labels (token level) or 1 x n_labels (sentence level)
  std::shared_ptr<Activations<T>> cache;
};

/// Five-way (plus segment) embedding sum before layer norm.
template <typename T> Matrix<T> embedding_sum(const EncoderInput &input, const Parameters<T> &params);
/// embedding_sum followed by layer norm and (when training) dropout.
template <typename T> Matrix<T> embed(const EncoderInput &input, const Parameters<T> &params,
                                      const ForwardOptions &opts = {});

/// Throws ConfigError when ids exceed a table (naming it), NumericError on a
/// non-finite activation (naming the layer).
template <typename T>
ForwardResult<T> forward(const EncoderInput &input, const Parameters<T> &params, const ForwardOptions &opts = {});

/// Row-wise softmax of logits.
template <typename T> Matrix<T> probabilities(const Matrix<T> &logits);

/// Mean cross-entropy over rows whose label is not the ignore sentinel; 0 with a
/// warning when every label is ignored.
template <typename T> T cross_entropy(const Matrix<T> &logits, std::span<const int> labels);

/// Labels matching the logits' rows: the token labels, or the sentence label.
std::vector<int> target_labels(const EncoderInput &input, ClassificationMode mode);

/// Accumulates d(loss_scale * sum_t CE_t)/dθ into `grads`, where the sum runs
/// over labeled rows. Use loss_scale = 1 / labeled_count for the mean.
template <typename T>
void backward(const ForwardResult<T> &fwd, const EncoderInput &input, std::span<const int> labels,
              const Parameters<T> &params, T loss_scale, Gradients<T> &grads);

struct GradCheckEntry {
  std::string tensor;
  std::size_t index = 0;
  double analytic = 0.0;
  double numeric = 0.0;
  double rel_error = 0.0;
};

struct GradCheckReport {
  bool passed = true;
  std::size_t checked = 0;
  GradCheckEntry worst;
  std::vector<std::string> failing_tensors;
  std::vector<GradCheckEntry> entries;
};

/// Compares analytic gradients of the mean loss against central differences on
/// `samples_per_tensor` coordinates of every tensor (embedding coordinates are
/// drawn from rows present in the input). rel = |a - n| / max(|a|, |n|, floor).
GradCheckReport check_gradients(const EncoderInput &input, const Parameters<double> &params, double eps, double tol,
                                std::size_t samples_per_tensor = 20, std::uint64_t seed = 1,
                                double denominator_floor = 1e-6);

} // namespace toxbuster
