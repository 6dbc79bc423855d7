#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_set>
#include <vector>

#include "storywrangler/civil_time.hpp"
#include "storywrangler/store.hpp"
#include "storywrangler/zipf.hpp"

namespace storywrangler {

inline constexpr double kDefaultAlpha = 0.25;
/// The reference day sits 52 weeks back so both days share a weekday.
inline constexpr int kReferenceLagDays = 364;
inline constexpr std::size_t kDefaultTrendingCount = 20;

/// |r_now^-a - r_ref^-a|^(1/(a+1)), with an absent rank contributing 0 to
/// the difference. Throws std::invalid_argument when both ranks are absent,
/// a rank is not positive, or alpha <= 0.
double rtd_contribution(std::optional<double> r_now, std::optional<double> r_ref, double alpha = kDefaultAlpha);

/// Which tokens disqualify an n-gram. A hashtag-class token is never
/// dropped while keep_hashtags is set.
struct FilterPolicy {
    bool drop_links = true;
    bool drop_handles = true;
    bool drop_emojis = true;
    bool drop_stopwords = true;
    bool keep_hashtags = true;
    /// Name of a bundled stopword list; empty selects the query language's
    /// list when one exists.
    std::string stopword_list;
};

/// Names of the bundled stopword lists.
std::vector<std::string> stopword_lists();
/// Lowercased entries of a bundled list. Throws NotFoundError.
const std::unordered_set<std::string>& stopwords(std::string_view list);
/// Case-insensitive; a right single quote matches an apostrophe.
bool is_stopword(std::string_view token, const std::unordered_set<std::string>& list);

/// True (keep) iff no component token violates the policy. `language`
/// selects the stopword list when policy.stopword_list is empty.
bool apply_filter(std::string_view ngram, const FilterPolicy& policy, std::string_view language = "en");

struct TrendingEntry {
    std::string ngram;
    double rtd = 0.0;
    double rank_today = 0.0;
    std::optional<double> rank_reference;  // absent: not stored on the reference day
    std::optional<double> log10_rel_amp;   // absent: undefined that day

    friend bool operator==(const TrendingEntry&, const TrendingEntry&) = default;
};

struct TrendingResult {
    Date date;
    Date reference;
    std::string language;
    int n = 1;
    std::size_t k = kDefaultTrendingCount;
    double alpha = kDefaultAlpha;
    FilterPolicy policy;
    std::vector<TrendingEntry> entries;
};

/// Scores the n-grams of `today` that kept or improved their rank relative
/// to `reference` (absent there counts as improved) and returns the top k
/// that pass the filter, by descending contribution then n-gram bytes.
std::vector<TrendingEntry> rank_turbulence_top(const DailyZipf& today, const DailyZipf& reference, std::size_t k,
                                               const FilterPolicy& policy, double alpha = kDefaultAlpha);

/// Loads the cells for `date` and `date - 364`. Throws MissingCellError
/// naming the first missing cell and NotFoundError for an unknown partition.
TrendingResult narratively_trending(const Store& store, Date date, std::string_view language, int n,
                                    std::size_t k = kDefaultTrendingCount, const FilterPolicy& policy = {},
                                    double alpha = kDefaultAlpha);

}  // namespace storywrangler
