#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>

namespace toxbuster {

// Label index used by the classifier equals the enumerator value.
enum class ToxicCategory : std::uint8_t {
  HateAndHarassment = 0,
  Threats,
  MinorEndangerment,
  Extremism,
  ScamsAndAds,
  InsultsAndFlaming,
  Spam,
  OtherOffensive,
  NonToxic,
};

inline constexpr int kNumToxicCategories = 8;
inline constexpr int kNumLabels = 9;
inline constexpr int kIgnoreLabel = -100;
inline constexpr int kNonToxicLabel = static_cast<int>(ToxicCategory::NonToxic);

inline constexpr std::array<ToxicCategory, kNumLabels> kAllCategories = {
    ToxicCategory::HateAndHarassment, ToxicCategory::Threats,     ToxicCategory::MinorEndangerment,
    ToxicCategory::Extremism,         ToxicCategory::ScamsAndAds, ToxicCategory::InsultsAndFlaming,
    ToxicCategory::Spam,              ToxicCategory::OtherOffensive, ToxicCategory::NonToxic,
};

constexpr int label_of(ToxicCategory c) { return static_cast<int>(c); }
constexpr ToxicCategory category_of(int label) { return static_cast<ToxicCategory>(label); }
constexpr bool is_toxic(ToxicCategory c) { return c != ToxicCategory::NonToxic; }

/// Canonical snake_case name, e.g. "hate_and_harassment".
std::string_view to_string(ToxicCategory c);
/// Human-readable name, e.g. "Hate and Harassment".
std::string_view display_name(ToxicCategory c);
/// Accepts snake_case, CamelCase and display names, case-insensitively.
std::optional<ToxicCategory> parse_category(std::string_view s);

/// Total order over the eight toxic categories; rank 1 is most severe.
class SeverityOrder {
public:
  /// Listing order of the category definitions: HateAndHarassment = 1 ... OtherOffensive = 8.
  SeverityOrder();
  /// `most_to_least` must be a permutation of the eight toxic categories.
  explicit SeverityOrder(std::span<const ToxicCategory> most_to_least);

  int rank(ToxicCategory c) const;
  /// NonToxic loses against every toxic category.
  ToxicCategory more_severe(ToxicCategory a, ToxicCategory b) const;
  ToxicCategory most_severe(std::span<const ToxicCategory> cs) const;
  std::array<ToxicCategory, kNumToxicCategories> ordered() const;

private:
  std::array<int, kNumToxicCategories> rank_{};
};

} // namespace toxbuster
