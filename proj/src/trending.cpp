#include "storywrangler/trending.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <stdexcept>
#include <unordered_map>

#include "storywrangler/error.hpp"
#include "storywrangler/measures.hpp"
#include "storywrangler/tokenizer.hpp"
#include "storywrangler/unicode.hpp"

namespace storywrangler {

namespace detail {
// Generated at build time from data/stopwords/*.txt.
struct EmbeddedList {
    std::string_view name;
    std::string_view text;
};
extern const EmbeddedList kStopwordData[];
extern const std::size_t kStopwordDataCount;
}  // namespace detail

double rtd_contribution(std::optional<double> r_now, std::optional<double> r_ref, double alpha) {
    if (!(alpha > 0.0)) throw std::invalid_argument("alpha must be positive");
    if (!r_now && !r_ref) throw std::invalid_argument("rank-turbulence contribution needs at least one rank");
    if ((r_now && !(*r_now > 0.0)) || (r_ref && !(*r_ref > 0.0))) throw std::invalid_argument("ranks must be positive");
    const double a = r_now ? std::pow(*r_now, -alpha) : 0.0;
    const double b = r_ref ? std::pow(*r_ref, -alpha) : 0.0;
    return std::pow(std::fabs(a - b), 1.0 / (alpha + 1.0));
}

namespace {

std::string normalize_word(std::string_view token) {
    std::string lower = unicode::to_lower(token);
    // U+2019 RIGHT SINGLE QUOTATION MARK -> apostrophe
    std::string out;
    out.reserve(lower.size());
    for (std::size_t i = 0; i < lower.size(); ++i) {
        if (lower.compare(i, 3, "\xE2\x80\x99") == 0) {
            out.push_back('\'');
            i += 2;
        } else {
            out.push_back(lower[i]);
        }
    }
    return out;
}

const std::map<std::string, std::unordered_set<std::string>, std::less<>>& all_lists() {
    static const auto lists = [] {
        std::map<std::string, std::unordered_set<std::string>, std::less<>> out;
        for (std::size_t i = 0; i < detail::kStopwordDataCount; ++i) {
            auto& set = out[std::string(detail::kStopwordData[i].name)];
            std::string_view text = detail::kStopwordData[i].text;
            while (!text.empty()) {
                const auto eol = text.find('\n');
                auto line = text.substr(0, eol);
                text.remove_prefix(eol == std::string_view::npos ? text.size() : eol + 1);
                while (!line.empty() && (line.back() == '\r' || line.back() == ' ')) line.remove_suffix(1);
                if (line.empty() || line.front() == '#') continue;
                set.insert(normalize_word(line));
            }
        }
        return out;
    }();
    return lists;
}

const std::unordered_set<std::string>* list_for(const FilterPolicy& policy, std::string_view language) {
    if (!policy.stopword_list.empty()) return &stopwords(policy.stopword_list);
    const auto base = language.substr(0, language.find_first_of("-_"));
    const auto& lists = all_lists();
    const auto it = lists.find(base);
    return it == lists.end() ? nullptr : &it->second;
}

bool token_allowed(std::string_view token, const FilterPolicy& policy, const std::unordered_set<std::string>* words) {
    const auto cls = classify_token(token).value_or(TokenClass::word);
    switch (cls) {
        case TokenClass::hashtag: return policy.keep_hashtags;
        case TokenClass::url: return !policy.drop_links;
        case TokenClass::handle: return !policy.drop_handles;
        case TokenClass::emoji: return !policy.drop_emojis;
        default: break;
    }
    return !(policy.drop_stopwords && words && is_stopword(token, *words));
}

bool keep(std::string_view ngram, const FilterPolicy& policy, const std::unordered_set<std::string>* words) {
    while (true) {
        const auto space = ngram.find(' ');
        if (!token_allowed(ngram.substr(0, space), policy, words)) return false;
        if (space == std::string_view::npos) return true;
        ngram.remove_prefix(space + 1);
    }
}

}  // namespace

std::vector<std::string> stopword_lists() {
    std::vector<std::string> out;
    for (const auto& [name, words] : all_lists()) out.push_back(name);
    return out;
}

const std::unordered_set<std::string>& stopwords(std::string_view list) {
    const auto& lists = all_lists();
    const auto it = lists.find(list);
    if (it == lists.end()) throw NotFoundError("no stopword list named '" + std::string(list) + "'");
    return it->second;
}

bool is_stopword(std::string_view token, const std::unordered_set<std::string>& list) {
    return list.count(normalize_word(token)) > 0;
}

bool apply_filter(std::string_view ngram, const FilterPolicy& policy, std::string_view language) {
    return keep(ngram, policy, policy.drop_stopwords ? list_for(policy, language) : nullptr);
}

std::vector<TrendingEntry> rank_turbulence_top(const DailyZipf& today, const DailyZipf& reference, std::size_t k,
                                               const FilterPolicy& policy, double alpha) {
    if (!(alpha > 0.0)) throw std::invalid_argument("alpha must be positive");
    const auto* words = policy.drop_stopwords ? list_for(policy, today.bucket.language) : nullptr;

    std::unordered_map<std::string_view, double> ref_rank;
    ref_rank.reserve(reference.records.size());
    for (const auto& r : reference.records) ref_rank.emplace(r.ngram, r.r_at);

    struct Candidate {
        const NgramRecord* record;
        std::optional<double> r_ref;
        double rtd;
    };
    std::vector<Candidate> candidates;
    candidates.reserve(today.records.size());
    for (const auto& r : today.records) {
        std::optional<double> r_ref;
        if (const auto it = ref_rank.find(r.ngram); it != ref_rank.end()) r_ref = it->second;
        // only n-grams that held or gained ground on the day
        if (r_ref && r.r_at > *r_ref) continue;
        candidates.push_back({&r, r_ref, rtd_contribution(r.r_at, r_ref, alpha)});
    }
    std::sort(candidates.begin(), candidates.end(), [](const Candidate& a, const Candidate& b) {
        if (a.rtd != b.rtd) return a.rtd > b.rtd;
        return a.record->ngram < b.record->ngram;
    });

    const ScopeSums background{today.totals.ot, today.totals.rt};
    std::vector<TrendingEntry> out;
    for (const auto& c : candidates) {
        if (out.size() >= k) break;
        if (!keep(c.record->ngram, policy, words)) continue;
        TrendingEntry e;
        e.ngram = c.record->ngram;
        e.rtd = c.rtd;
        e.rank_today = c.record->r_at;
        e.rank_reference = c.r_ref;
        const auto rel = relative_rate({c.record->f_ot, c.record->f_rt}, background);
        if (rel && *rel > 0.0) e.log10_rel_amp = std::log10(*rel);
        out.push_back(std::move(e));
    }
    return out;
}

TrendingResult narratively_trending(const Store& store, Date date, std::string_view language, int n, std::size_t k,
                                    const FilterPolicy& policy, double alpha) {
    validate_order(n);
    if (!store.has_partition(language, n)) {
        throw NotFoundError("no " + std::to_string(n) + "-gram data for language '" + std::string(language) + "'");
    }
    TrendingResult result;
    result.date = date;
    result.reference = date - kReferenceLagDays;
    result.language = std::string(language);
    result.n = n;
    result.k = k;
    result.alpha = alpha;
    result.policy = policy;

    const auto load = [&](Date d) {
        if (!store.has_day(d, language, n)) {
            throw MissingCellError(std::string(language) + "/" + std::to_string(n) + "gram/" + d.to_string());
        }
        return store.get_day(d, language, n);
    };
    const auto today = load(date);
    const auto reference = load(result.reference);
    result.entries = rank_turbulence_top(today, reference, k, policy, alpha);
    return result;
}

}  // namespace storywrangler
