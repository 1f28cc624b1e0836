#include "toxbuster/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

#include "toxbuster/errors.hpp"
#include "toxbuster/hash.hpp"
#include "toxbuster/log.hpp"

namespace toxbuster {
namespace {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

constexpr char kMagic[8] = {'T', 'O', 'X', 'B', 'C', 'K', 'P', 'T'};

class Writer {
public:
  void bytes(const void *p, std::size_t n) {
    const auto *c = static_cast<const char *>(p);
    buf_.append(c, n);
  }
  template <typename T> void scalar(T v) { bytes(&v, sizeof v); }
  std::size_t size() const { return buf_.size(); }
  std::string &buffer() { return buf_; }

private:
  std::string buf_;
};

class Reader {
public:
  Reader(const std::string &data, std::string origin) : data_(data), origin_(std::move(origin)) {}

  void bytes(void *p, std::size_t n) {
    if (n > data_.size() - pos_)
      throw IntegrityError("checkpoint " + origin_ + " is truncated at byte " + std::to_string(pos_));
    std::memcpy(p, data_.data() + pos_, n);
    pos_ += n;
  }
  template <typename T> T scalar() {
    T v;
    bytes(&v, sizeof v);
    return v;
  }
  std::size_t pos() const { return pos_; }
  void seek(std::size_t p) {
    if (p > data_.size()) throw IntegrityError("checkpoint " + origin_ + " offset beyond end of file");
    pos_ = p;
  }

private:
  const std::string &data_;
  std::size_t pos_ = 0;
  std::string origin_;
};

std::string read_file(const std::filesystem::path &path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open checkpoint " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

nlohmann::json manifest(const ParamLayout &layout) {
  auto arr = nlohmann::json::array();
  for (const auto &s : layout.specs()) arr.push_back({{"name", s.name}, {"rows", s.rows}, {"cols", s.cols}});
  return arr;
}

} // namespace

void to_json(nlohmann::json &j, const ContextOptions &o) {
  j = nlohmann::json{{"mode", o.mode ? std::string(to_string(*o.mode)) : std::string("none")},
                     {"id_order", o.id_order == IdOrder::Backward ? "backward" : "forward"},
                     {"max_speakers", o.max_speakers},
                     {"inline", {{"player", o.inline_fields.player},
                                 {"team", o.inline_fields.team},
                                 {"chat_type", o.inline_fields.chat_type}}}};
}

void from_json(const nlohmann::json &j, ContextOptions &o) {
  if (j.contains("mode")) {
    const auto m = j.at("mode").get<std::string>();
    o.mode = m == "none" ? std::nullopt : std::optional<ChatMode>(parse_chat_mode(m));
  }
  if (j.contains("id_order")) {
    const auto s = j.at("id_order").get<std::string>();
    if (s != "backward" && s != "forward") throw ConfigError("id_order must be 'backward' or 'forward'");
    o.id_order = s == "backward" ? IdOrder::Backward : IdOrder::Forward;
  }
  if (j.contains("max_speakers")) j.at("max_speakers").get_to(o.max_speakers);
  if (j.contains("inline")) {
    const auto &f = j.at("inline");
    o.inline_fields.player = f.value("player", false);
    o.inline_fields.team = f.value("team", false);
    o.inline_fields.chat_type = f.value("chat_type", false);
  }
}

void save_checkpoint(const std::filesystem::path &path, const Parameters<float> &params, const Vocabulary &vocab,
                     const ContextOptions &context) {
  if (static_cast<std::size_t>(params.config.vocab_size) != vocab.size())
    throw ConfigError("encoder vocab_size " + std::to_string(params.config.vocab_size) + " differs from vocabulary size " +
                      std::to_string(vocab.size()));
  const ParamLayout &layout = *params.layout;
  nlohmann::json header = {{"encoder", params.config},
                           {"config_hash", params.config.hash()},
                           {"context", context},
                           {"tensors", manifest(layout)}};
  const std::string header_text = header.dump();
  std::ostringstream vs;
  vocab.save(vs);
  const std::string vocab_text = vs.str();

  Writer w;
  w.bytes(kMagic, sizeof kMagic);
  w.scalar<std::uint32_t>(kCheckpointVersion);
  w.scalar<std::uint32_t>(0);
  w.scalar<std::uint64_t>(header_text.size());
  w.bytes(header_text.data(), header_text.size());
  const std::size_t count = layout.total_size();
  const std::size_t vocab_offset = w.size() + 3 * sizeof(std::uint64_t) + count * sizeof(float);
  w.scalar<std::uint64_t>(vocab_offset);
  w.scalar<std::uint64_t>(vocab_text.size());
  w.scalar<std::uint64_t>(count);
  for (std::size_t t = 0; t < layout.count(); ++t) {
    const auto &tensor = params.tensors[t];
    if (tensor.size() != layout.specs()[t].size()) throw IntegrityError("tensor " + layout.specs()[t].name + " has wrong size");
    w.bytes(tensor.data(), tensor.size() * sizeof(float));
  }
  w.bytes(vocab_text.data(), vocab_text.size());
  Fnv1a64 h;
  h.update(w.buffer().data(), w.size());
  w.scalar<std::uint64_t>(h.digest());

  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  const auto tmp = std::filesystem::path(path.string() + ".tmp");
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write checkpoint " + tmp.string());
    out.write(w.buffer().data(), static_cast<std::streamsize>(w.size()));
    if (!out) throw std::runtime_error("failed writing checkpoint " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

Checkpoint load_checkpoint(const std::filesystem::path &path) {
  const std::string data = read_file(path);
  const std::string origin = path.string();
  if (data.size() < sizeof kMagic + sizeof(std::uint64_t))
    throw IntegrityError("checkpoint " + origin + " is truncated");
  if (std::memcmp(data.data(), kMagic, sizeof kMagic) != 0) throw IntegrityError(origin + " is not a checkpoint");

  Reader r(data, origin);
  char magic[8];
  r.bytes(magic, sizeof magic);
  const auto version = r.scalar<std::uint32_t>();
  if (version != kCheckpointVersion)
    throw IntegrityError("checkpoint " + origin + " has format version " + std::to_string(version) +
                         "; this build reads version " + std::to_string(kCheckpointVersion));
  r.scalar<std::uint32_t>();
  const auto header_len = r.scalar<std::uint64_t>();
  if (header_len > data.size()) throw IntegrityError("checkpoint " + origin + " is truncated in the header");
  std::string header_text(header_len, '\0');
  r.bytes(header_text.data(), header_len);
  const auto vocab_offset = r.scalar<std::uint64_t>();
  const auto vocab_len = r.scalar<std::uint64_t>();
  const auto count = r.scalar<std::uint64_t>();

  const std::size_t expected_size = vocab_offset + vocab_len + sizeof(std::uint64_t);
  if (vocab_offset > data.size() || data.size() < expected_size)
    throw IntegrityError("checkpoint " + origin + " is truncated: " + std::to_string(data.size()) + " of " +
                         std::to_string(expected_size) + " bytes");
  Fnv1a64 h;
  h.update(data.data(), expected_size - sizeof(std::uint64_t));
  std::uint64_t stored;
  std::memcpy(&stored, data.data() + expected_size - sizeof stored, sizeof stored);
  if (stored != h.digest()) throw IntegrityError("checkpoint " + origin + " failed its checksum");

  nlohmann::json header;
  try {
    header = nlohmann::json::parse(header_text);
  } catch (const nlohmann::json::exception &e) {
    throw IntegrityError("checkpoint " + origin + " header: " + e.what());
  }
  Checkpoint ck;
  ck.config = header.at("encoder").get<EncoderConfig>();
  ck.context = header.at("context").get<ContextOptions>();
  if (header.at("config_hash").get<std::string>() != ck.config.hash())
    throw IntegrityError("checkpoint " + origin + " config hash does not match its configuration");

  ck.params.config = ck.config;
  ck.params.layout = std::make_shared<const ParamLayout>(ck.config);
  const ParamLayout &layout = *ck.params.layout;
  if (count != layout.total_size())
    throw IntegrityError("checkpoint " + origin + " holds " + std::to_string(count) + " parameters, configuration needs " +
                         std::to_string(layout.total_size()));
  for (const auto &spec : layout.specs()) {
    std::vector<float> t(spec.size());
    r.bytes(t.data(), t.size() * sizeof(float));
    ck.params.tensors.push_back(std::move(t));
  }
  if (r.pos() != vocab_offset) throw IntegrityError("checkpoint " + origin + " vocabulary offset is inconsistent");
  std::istringstream vs(data.substr(vocab_offset, vocab_len));
  ck.vocab = Vocabulary::load(vs);
  if (ck.vocab.size() != static_cast<std::size_t>(ck.config.vocab_size))
    throw IntegrityError("checkpoint " + origin + " vocabulary size differs from its configuration");
  return ck;
}

Checkpoint load_for_finetune(const std::filesystem::path &path, const EncoderConfig &expected, bool force) {
  Checkpoint ck = load_checkpoint(path);
  EncoderConfig a = ck.config, b = expected;
  a.vocab_size = b.vocab_size = 0;
  if (a.hash() != b.hash()) {
    const std::string msg = "checkpoint " + path.string() + " config hash " + a.hash() +
                            " differs from the requested configuration " + b.hash();
    log::warn(msg);
    if (!force) throw ConfigError(msg + " (use --force to proceed)");
  }
  return ck;
}

std::string file_hash(const std::filesystem::path &path) { return to_hex(fnv1a64(read_file(path))); }

} // namespace toxbuster
