#include "toxbuster/category.hpp"

#include <algorithm>
#include <cctype>

#include "toxbuster/errors.hpp"

namespace toxbuster {
namespace {

struct Names {
  std::string_view snake, display;
};

constexpr Names kNames[kNumLabels] = {
    {"hate_and_harassment", "Hate and Harassment"},
    {"threats", "Threats"},
    {"minor_endangerment", "Minor Endangerment"},
    {"extremism", "Extremism"},
    {"scams_and_ads", "Scams and Ads"},
    {"insults_and_flaming", "Insults and Flaming"},
    {"spam", "Spam"},
    {"other_offensive", "Other Offensive"},
    {"non_toxic", "Non-toxic"},
};

// Lowercase with separators removed, so "HateAndHarassment", "hate_and_harassment"
// and "Hate and Harassment" compare equal.
std::string squash(std::string_view s) {
  std::string out;
  for (char c : s)
    if (std::isalnum(static_cast<unsigned char>(c))) out += static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

} // namespace

std::string_view to_string(ToxicCategory c) { return kNames[label_of(c)].snake; }
std::string_view display_name(ToxicCategory c) { return kNames[label_of(c)].display; }

std::optional<ToxicCategory> parse_category(std::string_view s) {
  const std::string key = squash(s);
  for (int i = 0; i < kNumLabels; ++i)
    if (squash(kNames[i].snake) == key) return category_of(i);
  if (key == "other" || key == "otheroffensivetext" || key == "otheroffensivetexts") return ToxicCategory::OtherOffensive;
  if (key == "clean" || key == "none") return ToxicCategory::NonToxic;
  return std::nullopt;
}

SeverityOrder::SeverityOrder() {
  for (int i = 0; i < kNumToxicCategories; ++i) rank_[i] = i + 1;
}

SeverityOrder::SeverityOrder(std::span<const ToxicCategory> most_to_least) {
  if (most_to_least.size() != kNumToxicCategories) throw ConfigError("severity order must list all 8 toxic categories");
  rank_.fill(0);
  int r = 1;
  for (ToxicCategory c : most_to_least) {
    if (!is_toxic(c)) throw ConfigError("severity order cannot contain NonToxic");
    if (rank_[label_of(c)] != 0) throw ConfigError("severity order lists a category twice");
    rank_[label_of(c)] = r++;
  }
}

int SeverityOrder::rank(ToxicCategory c) const {
  if (!is_toxic(c)) throw ConfigError("NonToxic has no severity rank");
  return rank_[label_of(c)];
}

ToxicCategory SeverityOrder::more_severe(ToxicCategory a, ToxicCategory b) const {
  if (!is_toxic(a)) return b;
  if (!is_toxic(b)) return a;
  return rank(a) <= rank(b) ? a : b;
}

ToxicCategory SeverityOrder::most_severe(std::span<const ToxicCategory> cs) const {
  ToxicCategory best = ToxicCategory::NonToxic;
  for (ToxicCategory c : cs) best = more_severe(best, c);
  return best;
}

std::array<ToxicCategory, kNumToxicCategories> SeverityOrder::ordered() const {
  std::array<ToxicCategory, kNumToxicCategories> out{};
  for (int i = 0; i < kNumToxicCategories; ++i) out[rank_[i] - 1] = category_of(i);
  return out;
}

} // namespace toxbuster
