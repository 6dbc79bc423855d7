#include "storywrangler/zipf.hpp"

#include <omp.h>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <stdexcept>

#include "storywrangler/error.hpp"

namespace storywrangler {

std::vector<double> fractional_ranks(std::span<const std::uint64_t> freqs) {
    std::vector<std::size_t> order(freqs.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return freqs[a] > freqs[b]; });

    std::vector<double> ranks(freqs.size());
    std::size_t group = 0;
    while (group < order.size()) {
        std::size_t end = group + 1;
        while (end < order.size() && freqs[order[end]] == freqs[order[group]]) ++end;
        // positions group+1 .. end (1-based) share their mean
        const double rank = static_cast<double>(group + 1 + end) / 2.0;
        for (std::size_t k = group; k < end; ++k) ranks[order[k]] = rank;
        group = end;
    }
    return ranks;
}

namespace {

double ratio(std::uint64_t f, std::uint64_t total) {
    return total == 0 ? 0.0 : static_cast<double>(f) / static_cast<double>(total);
}

// Fractional ranks for the entries with a nonzero count in one scope.
std::vector<std::optional<double>> scope_ranks(std::span<const std::uint64_t> freqs) {
    std::vector<std::uint64_t> present;
    std::vector<std::size_t> where;
    present.reserve(freqs.size());
    where.reserve(freqs.size());
    for (std::size_t k = 0; k < freqs.size(); ++k) {
        if (freqs[k] == 0) continue;
        present.push_back(freqs[k]);
        where.push_back(k);
    }
    const auto ranks = fractional_ranks(present);
    std::vector<std::optional<double>> out(freqs.size());
    for (std::size_t k = 0; k < where.size(); ++k) out[where[k]] = ranks[k];
    return out;
}

}  // namespace

std::uint64_t order_prefix(std::string_view s) noexcept {
    std::uint64_t v = 0;
    const auto n = std::min<std::size_t>(s.size(), 8);
    for (std::size_t k = 0; k < 8; ++k) v = (v << 8) | (k < n ? static_cast<unsigned char>(s[k]) : 0u);
    return v;
}

DailyZipf build_daily_zipf(const DayCounts& dc, std::size_t truncate_at) {
    if (dc.counts.empty()) {
        throw std::invalid_argument("cannot build a Zipf distribution from an empty cell (" + dc.bucket.language + " " +
                                    dc.bucket.date.to_string() + " " + std::to_string(dc.n) + "-grams)");
    }
    if (truncate_at == 0) throw std::invalid_argument("truncate_at must be positive");

    // sort keys carry the count and a string prefix so most comparisons
    // stay out of the hash-table nodes
    struct Key {
        std::uint64_t f;
        std::uint64_t prefix;
        const CountMap::value_type* entry;
    };
    std::vector<Key> keys;
    keys.reserve(dc.counts.size());
    for (const auto& kv : dc.counts) keys.push_back({kv.second.at(), order_prefix(kv.first), &kv});
    std::sort(keys.begin(), keys.end(), [](const Key& a, const Key& b) {
        if (a.f != b.f) return a.f > b.f;
        if (a.prefix != b.prefix) return a.prefix < b.prefix;
        return a.entry->first < b.entry->first;
    });
    using Entry = const CountMap::value_type*;
    std::vector<Entry> entries;
    entries.reserve(keys.size());
    for (const auto& k : keys) entries.push_back(k.entry);
    std::vector<Key>().swap(keys);

    DailyZipf z;
    z.bucket = dc.bucket;
    z.n = dc.n;
    z.volume = dc.volume;
    z.truncate_at = truncate_at;

    const std::size_t size = entries.size();
    std::vector<std::uint64_t> f_ot(size);
    std::vector<std::uint64_t> f_rt(size);
    for (std::size_t k = 0; k < size; ++k) {
        f_ot[k] = entries[k]->second.ot;
        f_rt[k] = entries[k]->second.rt;
        z.totals.ot += f_ot[k];
        z.totals.rt += f_rt[k];
        z.lexicon.ot += f_ot[k] > 0;
        z.lexicon.rt += f_rt[k] > 0;
    }
    z.totals.at = z.totals.ot + z.totals.rt;
    z.lexicon.at = size;

    const auto r_ot = scope_ranks(f_ot);
    const auto r_rt = scope_ranks(f_rt);

    const std::size_t kept = std::min(size, truncate_at);
    z.truncated = kept < size;
    z.records.reserve(kept);
    // entries are already in descending f_at order, so AT ranks follow from runs
    std::size_t group = 0;
    while (group < kept) {
        const auto f = entries[group]->second.at();
        std::size_t end = group + 1;
        while (end < size && entries[end]->second.at() == f) ++end;
        const double rank = static_cast<double>(group + 1 + end) / 2.0;
        for (std::size_t k = group; k < end && k < kept; ++k) {
            NgramRecord r;
            r.ngram = entries[k]->first;
            r.f_ot = f_ot[k];
            r.f_rt = f_rt[k];
            r.f_at = f;
            r.p_at = ratio(r.f_at, z.totals.at);
            r.p_ot = ratio(r.f_ot, z.totals.ot);
            r.p_rt = ratio(r.f_rt, z.totals.rt);
            r.r_at = rank;
            r.r_ot = r_ot[k];
            r.r_rt = r_rt[k];
            z.records.push_back(std::move(r));
        }
        group = end;
    }
    return z;
}

std::vector<DailyZipf> build_all(std::span<const DayCounts> cells, std::size_t truncate_at, int workers) {
    const int w = resolve_workers(workers);
    std::vector<std::optional<DailyZipf>> built(cells.size());
    const auto count = static_cast<std::int64_t>(cells.size());

#pragma omp parallel for num_threads(w) schedule(dynamic, 1) if (w > 1)
    for (std::int64_t i = 0; i < count; ++i) {
        const auto& cell = cells[static_cast<std::size_t>(i)];
        if (!cell.counts.empty()) built[static_cast<std::size_t>(i)] = build_daily_zipf(cell, truncate_at);
    }

    std::vector<DailyZipf> out;
    out.reserve(cells.size());
    for (auto& z : built) {
        if (z) out.push_back(std::move(*z));
    }
    return out;
}

std::vector<DailyZipf> build_all_serial(std::span<const DayCounts> cells, std::size_t truncate_at) {
    std::vector<DailyZipf> out;
    for (const auto& cell : cells) {
        if (!cell.counts.empty()) out.push_back(build_daily_zipf(cell, truncate_at));
    }
    return out;
}

namespace {

constexpr int kProbabilityDigits = 12;

// printf("%#.12g") through the precise to_chars path, then the trailing
// zeros and the point that '#' keeps are restored.
void append_probability_precise(std::string& out, double p) {
    char buf[64];
    const auto [end, ec] = std::to_chars(buf, buf + sizeof buf, p, std::chars_format::general, kProbabilityDigits);
    const std::string_view text(buf, static_cast<std::size_t>(end - buf));
    if (!std::isfinite(p)) {
        out += text;
        return;
    }
    const auto e = text.find('e');
    const auto mantissa = text.substr(0, e);
    int significant = 0;
    bool leading = true;
    for (char c : mantissa) {
        if (c < '0' || c > '9') continue;
        if (leading && c == '0') continue;
        leading = false;
        ++significant;
    }
    if (leading) significant = 1;  // zero
    out += mantissa;
    if (mantissa.find('.') == std::string_view::npos) out += '.';
    out.append(static_cast<std::size_t>(std::max(0, kProbabilityDigits - significant)), '0');
    if (e != std::string_view::npos) out += text.substr(e);
}

// Same text as printf("%#.12g"). Rounds the shortest round-trip digits,
// which agrees with rounding the exact value except when those digits end
// in a lone 5 at the 13th place; that case takes the precise path.
void append_probability(std::string& out, double p) {
    if (!std::isnormal(p)) {  // subnormals carry too few digits for the argument above
        append_probability_precise(out, p);
        return;
    }
    char buf[64];
    const auto [end, ec] = std::to_chars(buf, buf + sizeof buf, p, std::chars_format::scientific);
    const std::string_view text(buf, static_cast<std::size_t>(end - buf));
    const auto e = text.find('e');
    int exponent = 0;
    std::from_chars(text.data() + e + (text[e + 1] == '+' ? 2 : 1), text.data() + text.size(), exponent);
    char digits[32];
    int count = 0;
    bool negative = false;
    for (char c : text.substr(0, e)) {
        if (c == '-') negative = true;
        if (c >= '0' && c <= '9') digits[count++] = c;
    }
    if (count > kProbabilityDigits) {
        if (count == kProbabilityDigits + 1 && digits[kProbabilityDigits] == '5') {
            append_probability_precise(out, p);
            return;
        }
        if (digits[kProbabilityDigits] >= '5') {
            int k = kProbabilityDigits - 1;
            while (k >= 0 && digits[k] == '9') digits[k--] = '0';
            if (k >= 0) {
                ++digits[k];
            } else {
                digits[0] = '1';  // 9.99...9 became 10.0...0
                ++exponent;
            }
        }
    }
    for (int k = std::min(count, kProbabilityDigits); k < kProbabilityDigits; ++k) digits[k] = '0';
    if (negative) out += '-';
    if (exponent < -4 || exponent >= kProbabilityDigits) {
        out += digits[0];
        out += '.';
        out.append(digits + 1, kProbabilityDigits - 1);
        out += exponent < 0 ? "e-" : "e+";
        const int mag = std::abs(exponent);
        if (mag < 10) out += '0';
        out += std::to_string(mag);
    } else if (exponent >= 0) {
        out.append(digits, static_cast<std::size_t>(exponent) + 1);
        out += '.';
        out.append(digits + exponent + 1, static_cast<std::size_t>(kProbabilityDigits - exponent - 1));
    } else {
        out += "0.";
        out.append(static_cast<std::size_t>(-exponent - 1), '0');
        out.append(digits, kProbabilityDigits);
    }
}

// Fractional ranks are whole or halves.
void append_rank(std::string& out, double r) {
    char buf[48];
    const auto [end, ec] = r == std::floor(r) && r < 1e19
                               ? std::to_chars(buf, buf + sizeof buf, static_cast<std::uint64_t>(r))
                               : std::to_chars(buf, buf + sizeof buf, r, std::chars_format::fixed, 1);
    out.append(buf, end);
}

void append_count(std::string& out, std::uint64_t v) {
    char buf[24];
    const auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v);
    out.append(buf, end);
}

void append_row(std::string& out, std::string_view ngram, std::uint64_t count, std::uint64_t count_no_rt, double rank,
                std::optional<double> rank_no_rt, double freq, double freq_no_rt) {
    if (ngram.find_first_of("\t\n\r") != std::string_view::npos) {
        throw std::invalid_argument("n-gram contains a tab or newline");
    }
    out += ngram;
    out += '\t';
    append_count(out, count);
    out += '\t';
    append_count(out, count_no_rt);
    out += '\t';
    append_rank(out, rank);
    out += '\t';
    if (rank_no_rt) append_rank(out, *rank_no_rt);
    out += '\t';
    append_probability(out, freq);
    out += '\t';
    append_probability(out, freq_no_rt);
}

}  // namespace

std::string format_probability(double p) {
    std::string out;
    append_probability(out, p);
    return out;
}

std::string format_rank(double r) {
    std::string out;
    append_rank(out, r);
    return out;
}

std::string format_zipf_row(const ZipfRow& row) {
    std::string out;
    out.reserve(row.ngram.size() + 64);
    append_row(out, row.ngram, row.count, row.count_no_rt, row.rank, row.rank_no_rt, row.freq, row.freq_no_rt);
    return out;
}

namespace {

template <typename T>
T parse_field(std::string_view field, std::string_view what, std::string_view line) {
    T value{};
    const auto* end = field.data() + field.size();
    const auto [ptr, ec] = std::from_chars(field.data(), end, value);
    if (field.empty() || ec != std::errc{} || ptr != end) {
        throw ParseError("bad " + std::string(what) + " field '" + std::string(field) + "' in row '" + std::string(line) +
                         "'");
    }
    return value;
}

}  // namespace

ZipfRow parse_zipf_row(std::string_view line) {
    std::string_view fields[7];
    std::size_t count = 0;
    std::size_t start = 0;
    for (;;) {
        const auto tab = line.find('\t', start);
        if (count == 7) throw ParseError("too many columns in row '" + std::string(line) + "'");
        fields[count++] = line.substr(start, tab == std::string_view::npos ? std::string_view::npos : tab - start);
        if (tab == std::string_view::npos) break;
        start = tab + 1;
    }
    if (count != 7) throw ParseError("expected 7 columns in row '" + std::string(line) + "'");
    if (fields[0].empty()) throw ParseError("empty n-gram in row '" + std::string(line) + "'");

    ZipfRow row;
    row.ngram = std::string(fields[0]);
    row.count = parse_field<std::uint64_t>(fields[1], "count", line);
    row.count_no_rt = parse_field<std::uint64_t>(fields[2], "count_no_rt", line);
    row.rank = parse_field<double>(fields[3], "rank", line);
    if (!fields[4].empty()) row.rank_no_rt = parse_field<double>(fields[4], "rank_no_rt", line);
    row.freq = parse_field<double>(fields[5], "freq", line);
    row.freq_no_rt = parse_field<double>(fields[6], "freq_no_rt", line);
    return row;
}

std::vector<std::string> zipf_to_rows(const DailyZipf& z) {
    std::vector<std::string> rows;
    rows.reserve(z.records.size() + 1);
    rows.emplace_back(kZipfHeader);
    for (const auto& r : z.records) {
        rows.push_back(format_zipf_row({r.ngram, r.f_at, r.f_ot, r.r_at, r.r_ot, r.p_at, r.p_ot}));
    }
    return rows;
}

std::string zipf_to_tsv(const DailyZipf& z) {
    std::string out;
    std::size_t bytes = kZipfHeader.size() + 1;
    for (const auto& r : z.records) bytes += r.ngram.size() + 64;
    out.reserve(bytes);
    out += kZipfHeader;
    out += '\n';
    for (const auto& r : z.records) {
        append_row(out, r.ngram, r.f_at, r.f_ot, r.r_at, r.r_ot, r.p_at, r.p_ot);
        out += '\n';
    }
    return out;
}

void validate_zipf(const DailyZipf& z) {
    const auto fail = [&](const std::string& what) {
        throw IntegrityError(z.bucket.language + "/" + std::to_string(z.n) + "gram/" + z.bucket.date.to_string() + ": " +
                             what);
    };
    if (z.totals.at != z.totals.ot + z.totals.rt) fail("total_at != total_ot + total_rt");
    if (z.records.size() > z.lexicon.at) fail("more records than lexicon entries");
    if (z.truncated != (z.records.size() < z.lexicon.at)) fail("truncation flag inconsistent with lexicon size");
    if (z.truncate_at != 0 && z.records.size() > z.truncate_at) fail("more records than truncation limit");

    ScopeTotals sums;
    for (std::size_t k = 0; k < z.records.size(); ++k) {
        const auto& r = z.records[k];
        const auto where = [&] { return "record " + std::to_string(k) + " ('" + r.ngram + "')"; };
        if (r.ngram.empty() || r.ngram.find_first_of("\t\n\r") != std::string::npos) fail(where() + ": bad n-gram text");
        if (r.f_at != r.f_ot + r.f_rt) fail(where() + ": f_at != f_ot + f_rt");
        if (r.f_at == 0) fail(where() + ": zero count");
        if (r.r_at < 1.0) fail(where() + ": rank below 1");
        if (r.r_ot.has_value() != (r.f_ot > 0)) fail(where() + ": OT rank presence mismatch");
        if (r.r_rt.has_value() != (r.f_rt > 0)) fail(where() + ": RT rank presence mismatch");
        if ((r.r_ot && *r.r_ot < 1.0) || (r.r_rt && *r.r_rt < 1.0)) fail(where() + ": scope rank below 1");
        if (r.p_at != ratio(r.f_at, z.totals.at) || r.p_ot != ratio(r.f_ot, z.totals.ot) ||
            r.p_rt != ratio(r.f_rt, z.totals.rt)) {
            fail(where() + ": probability inconsistent with counts");
        }
        if (k > 0) {
            const auto& prev = z.records[k - 1];
            if (prev.f_at < r.f_at || (prev.f_at == r.f_at && !(prev.ngram < r.ngram))) fail(where() + ": out of order");
            if (prev.f_at == r.f_at && prev.r_at != r.r_at) fail(where() + ": tied counts with different ranks");
            if (prev.f_at > r.f_at && !(prev.r_at < r.r_at)) fail(where() + ": rank not monotone");
        }
        sums.at += r.f_at;
        sums.ot += r.f_ot;
        sums.rt += r.f_rt;
    }
    if (sums.at > z.totals.at || sums.ot > z.totals.ot || sums.rt > z.totals.rt) fail("record counts exceed totals");
    if (!z.truncated && !(sums == z.totals)) fail("untruncated record counts differ from totals");
}

}  // namespace storywrangler
