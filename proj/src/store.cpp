#include "storywrangler/store.hpp"

#include <fcntl.h>
#include <signal.h>
#include <sys/mman.h>
#include <sys/stat.h>
#include <unistd.h>
#include <zlib.h>

#include <algorithm>
#include <cerrno>
#include <bit>
#include <chrono>
#include <cmath>
#include <cstring>
#include <fstream>
#include <json.hpp>
#include <map>
#include <memory>
#include <numeric>
#include <queue>
#include <set>
#include <span>
#include <sstream>
#include <stdexcept>
#include <thread>
#include <unordered_map>

#include "storywrangler/error.hpp"
#include "storywrangler/tokenizer.hpp"

namespace storywrangler {

namespace fs = std::filesystem;
using ojson = nlohmann::ordered_json;

static_assert(std::endian::native == std::endian::little, "index format assumes a little-endian host");

DateRange::DateRange(Date from_, Date to_) : from(from_), to(to_) {
    if (to < from) throw std::invalid_argument("date range " + from.to_string() + ".." + to.to_string() + " is reversed");
}

std::uint32_t crc32_of(std::string_view bytes) noexcept {
    uLong crc = crc32(0L, Z_NULL, 0);
    // zlib takes uInt lengths; feed large inputs in slices
    while (!bytes.empty()) {
        const auto slice = std::min<std::size_t>(bytes.size(), 1u << 30);
        crc = crc32(crc, reinterpret_cast<const Bytef*>(bytes.data()), static_cast<uInt>(slice));
        bytes.remove_prefix(slice);
    }
    return static_cast<std::uint32_t>(crc);
}

namespace {

constexpr char kIndexMagic[8] = {'S', 'W', 'S', 'I', 'D', 'X', '0', '1'};
constexpr std::string_view kIndexFile = ".series.idx";
constexpr std::string_view kManifestFile = ".manifest";
constexpr std::string_view kMetaSuffix = ".meta.json";
constexpr std::string_view kCellFormat = "storywrangler-cell/1";

std::uint64_t fnv1a(std::string_view s) noexcept {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

std::string read_file(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    if (!in) throw NotFoundError("cannot open " + p.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return std::move(ss).str();
}

std::string hex32(std::uint32_t v) {
    char buf[9];
    std::snprintf(buf, sizeof buf, "%08x", v);
    return buf;
}

std::uint64_t rank2(std::optional<double> r) { return r ? static_cast<std::uint64_t>(std::llround(*r * 2.0)) : 0; }

struct Posting {
    std::int32_t date;
    std::uint32_t row;
    std::uint64_t f_at;
    std::uint64_t f_ot;
    std::uint64_t r2_at;  // twice the rank; 0 = absent
    std::uint64_t r2_ot;
    std::uint64_t r2_rt;
};
static_assert(sizeof(Posting) == 48);

struct IndexHeader {
    char magic[8];
    std::uint64_t manifest_fingerprint;
    std::uint32_t cell_count;
    std::uint32_t reserved;
    std::uint64_t ngram_count;
    std::uint64_t posting_count;
    std::uint64_t string_bytes;
    std::uint64_t hash_buckets;
    std::uint64_t reserved2;
};
static_assert(sizeof(IndexHeader) == 64);

struct IndexCell {
    std::int32_t date;
    std::uint32_t truncated;
    std::uint64_t rows;
    std::uint64_t truncate_at;
    std::uint64_t total_at, total_ot, total_rt;
    std::uint64_t lex_at, lex_ot, lex_rt;
    std::uint64_t vol_ot, vol_rt;
    std::uint64_t tsv_bytes;
    std::uint64_t meta_bytes;
    std::uint32_t tsv_crc;
    std::uint32_t meta_crc;
};
static_assert(sizeof(IndexCell) == 112);

struct IndexNgram {
    std::uint64_t string_offset;
    std::uint64_t string_length;
    std::uint64_t posting_offset;
    std::uint64_t posting_count;
};
static_assert(sizeof(IndexNgram) == 32);

template <typename T>
T load_at(std::string_view blob, std::size_t offset) {
    T value;
    std::memcpy(&value, blob.data() + offset, sizeof(T));
    return value;
}

template <typename T>
void append_raw(std::string& out, const T& value) {
    out.append(reinterpret_cast<const char*>(&value), sizeof(T));
}

std::uint64_t bucket_count_for(std::uint64_t n) { return std::bit_ceil(std::max<std::uint64_t>(2 * n, 8)); }

struct FileStamp {
    bool exists = false;
    std::uintmax_t size = 0;
    fs::file_time_type mtime{};

    friend bool operator==(const FileStamp&, const FileStamp&) = default;
};

FileStamp stamp_of(const fs::path& p) {
    std::error_code ec;
    FileStamp s;
    const auto status = fs::status(p, ec);
    if (ec || !fs::exists(status)) return s;
    s.exists = true;
    s.size = fs::file_size(p, ec);
    s.mtime = fs::last_write_time(p, ec);
    return s;
}

fs::path temp_path(const fs::path& target) {
    return target.parent_path() / ("." + target.filename().string() + "." + std::to_string(::getpid()) + ".tmp");
}

void write_file(const fs::path& path, std::string_view content) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
    if (!out) throw std::runtime_error("short write to " + path.string());
}

void write_atomic(const fs::path& target, std::string_view content) {
    const auto tmp = temp_path(target);
    write_file(tmp, content);
    fs::rename(tmp, target);
}

std::string cell_name(std::string_view language, int n, Date date) {
    return std::string(language) + "/" + std::to_string(n) + "gram/" + date.to_string();
}

// Sorted dates that have a committed cell (a meta sidecar) in `dir`.
std::vector<Date> committed_dates(const fs::path& dir) {
    std::vector<Date> dates;
    std::error_code ec;
    if (!fs::is_directory(dir, ec)) return dates;
    for (const auto& entry : fs::directory_iterator(dir)) {
        const auto name = entry.path().filename().string();
        if (name.size() != 10 + kMetaSuffix.size() || !name.ends_with(kMetaSuffix)) continue;
        try {
            dates.push_back(Date::parse(std::string_view(name).substr(0, 10)));
        } catch (const ParseError&) {
        }
    }
    std::sort(dates.begin(), dates.end());
    return dates;
}

std::string build_meta(const DailyZipf& z, std::string_view tsv) {
    ojson meta;
    meta["format"] = kCellFormat;
    meta["language"] = z.bucket.language;
    meta["n"] = z.n;
    meta["date"] = z.bucket.date.to_string();
    meta["rows"] = z.records.size();
    meta["truncated"] = z.truncated;
    meta["truncate_at"] = z.truncate_at;
    meta["totals"] = {{"at", z.totals.at}, {"ot", z.totals.ot}, {"rt", z.totals.rt}};
    meta["lexicon"] = {{"at", z.lexicon.at}, {"ot", z.lexicon.ot}, {"rt", z.lexicon.rt}};
    meta["volume"] = {{"ot", z.volume.ot}, {"rt", z.volume.rt}};
    meta["tsv_bytes"] = tsv.size();
    meta["tsv_crc32"] = hex32(crc32_of(tsv));
    auto& ranks = meta["rank_rt"] = ojson::array();
    ranks.get_ref<ojson::array_t&>().reserve(z.records.size());
    for (const auto& r : z.records) {
        if (r.r_rt) {
            ranks.push_back(*r.r_rt);
        } else {
            ranks.push_back(nullptr);
        }
    }
    return meta.dump() + "\n";
}

// Sidecar text for `date` still waiting in a temp file whose checksum matches `tsv`.
// After the TSV rename the new cell is committed; the sidecar rename only follows.
std::optional<std::string> pending_meta(const fs::path& dir, Date date, std::string_view tsv) {
    const auto prefix = "." + date.to_string() + std::string(kMetaSuffix) + ".";
    std::error_code ec;
    for (const auto& entry : fs::directory_iterator(dir, ec)) {
        const auto name = entry.path().filename().string();
        if (!name.starts_with(prefix) || !name.ends_with(".tmp")) continue;
        try {
            auto text = read_file(entry.path());
            const auto meta = ojson::parse(text);
            if (meta.at("tsv_bytes").get<std::uint64_t>() == tsv.size() &&
                meta.at("tsv_crc32").get<std::string>() == hex32(crc32_of(tsv))) {
                return text;
            }
        } catch (const std::exception&) {
        }
    }
    return std::nullopt;
}

bool process_alive(long pid) { return pid == ::getpid() || ::kill(static_cast<pid_t>(pid), 0) == 0 || errno == EPERM; }

// Finish commits interrupted after the TSV rename and drop temp files left by
// dead writers.
void recover_partition(const fs::path& dir) {
    std::error_code ec;
    if (!fs::is_directory(dir, ec)) return;
    std::vector<fs::path> temps;
    for (const auto& entry : fs::directory_iterator(dir, ec)) {
        const auto name = entry.path().filename().string();
        if (name.starts_with(".") && name.ends_with(".tmp")) temps.push_back(entry.path());
    }
    for (const auto& tmp : temps) {
        const auto name = tmp.filename().string();
        const auto stem_end = name.rfind('.', name.size() - 5);
        if (stem_end == std::string::npos || stem_end < 1) continue;
        long pid = 0;
        try {
            pid = std::stol(name.substr(stem_end + 1, name.size() - 4 - stem_end - 1));
        } catch (const std::exception&) {
            continue;
        }
        if (process_alive(pid) && pid != ::getpid()) continue;
        const auto target = name.substr(1, stem_end - 1);
        if (target.size() == 10 + kMetaSuffix.size() && target.ends_with(kMetaSuffix)) {
            try {
                const auto date = Date::parse(std::string_view(target).substr(0, 10));
                const auto tsv = read_file(dir / (date.to_string() + ".tsv"));
                if (pending_meta(dir, date, tsv)) {
                    fs::rename(tmp, dir / target);
                    continue;
                }
            } catch (const std::exception&) {
            }
        }
        fs::remove(tmp, ec);
    }
}

struct CellData {
    DailyZipf zipf;
    CellInfo info;
};

double ratio(std::uint64_t f, std::uint64_t total) {
    return total == 0 ? 0.0 : static_cast<double>(f) / static_cast<double>(total);
}

bool freq_matches(double stored, double exact) {
    if (exact == 0.0) return stored == 0.0;
    return std::fabs(stored - exact) <= 1e-11 * exact;
}

CellData read_cell(const fs::path& root, std::string_view language, int n, Date date) {
    const auto dir = Store::partition_dir(root, language, n);
    const auto meta_path = dir / (date.to_string() + std::string(kMetaSuffix));
    const auto tsv_path = dir / (date.to_string() + ".tsv");
    std::error_code ec;
    if (!fs::exists(meta_path, ec)) throw NotFoundError("no cell " + cell_name(language, n, date));

    // A concurrent overwrite can briefly pair a new file with the old sidecar.
    for (int attempt = 0;; ++attempt) {
        std::string meta_text;
        std::string tsv;
        try {
            meta_text = read_file(meta_path);
            tsv = read_file(tsv_path);
        } catch (const NotFoundError& e) {
            throw IntegrityError(std::string("incomplete cell: ") + e.what());
        }
        ojson meta;
        try {
            meta = ojson::parse(meta_text);
        } catch (const std::exception& e) {
            throw IntegrityError(meta_path.string() + ": unreadable metadata: " + e.what());
        }

        try {
            if (meta.at("format") != kCellFormat) throw IntegrityError("unknown format");
            if (meta.at("tsv_bytes").get<std::uint64_t>() != tsv.size() ||
                meta.at("tsv_crc32").get<std::string>() != hex32(crc32_of(tsv))) {
                if (attempt < 3) {
                    std::this_thread::sleep_for(std::chrono::milliseconds(5));
                    continue;
                }
                auto pending = pending_meta(dir, date, tsv);
                if (!pending) {
                    throw IntegrityError(tsv_path.string() + ": checksum mismatch against " + meta_path.filename().string());
                }
                meta_text = std::move(*pending);
                meta = ojson::parse(meta_text);
            }
            if (meta.at("language") != language || meta.at("n") != n || meta.at("date") != date.to_string()) {
                throw IntegrityError(meta_path.string() + ": metadata names a different cell");
            }

            CellData cell;
            auto& z = cell.zipf;
            z.bucket = {date, std::string(language)};
            z.n = n;
            z.truncated = meta.at("truncated").get<bool>();
            z.truncate_at = meta.at("truncate_at").get<std::uint64_t>();
            const auto& t = meta.at("totals");
            z.totals = {t.at("at").get<std::uint64_t>(), t.at("ot").get<std::uint64_t>(), t.at("rt").get<std::uint64_t>()};
            const auto& l = meta.at("lexicon");
            z.lexicon = {l.at("at").get<std::uint64_t>(), l.at("ot").get<std::uint64_t>(), l.at("rt").get<std::uint64_t>()};
            const auto& v = meta.at("volume");
            z.volume = {v.at("ot").get<std::uint64_t>(), v.at("rt").get<std::uint64_t>()};
            const auto rows = meta.at("rows").get<std::uint64_t>();
            const auto& rank_rt = meta.at("rank_rt");
            if (!rank_rt.is_array() || rank_rt.size() != rows) throw IntegrityError("rank_rt length differs from rows");

            std::string_view body = tsv;
            const auto header_end = body.find('\n');
            if (header_end == std::string_view::npos || body.substr(0, header_end) != kZipfHeader) {
                throw IntegrityError(tsv_path.string() + ": bad header");
            }
            body.remove_prefix(header_end + 1);
            z.records.reserve(rows);
            while (!body.empty()) {
                const auto eol = body.find('\n');
                if (eol == std::string_view::npos) throw IntegrityError(tsv_path.string() + ": missing final newline");
                const auto line = body.substr(0, eol);
                body.remove_prefix(eol + 1);
                const auto row = parse_zipf_row(line);
                if (z.records.size() >= rows) throw IntegrityError(tsv_path.string() + ": more rows than metadata");
                if (row.count_no_rt > row.count) throw IntegrityError(tsv_path.string() + ": count_no_rt > count");
                NgramRecord r;
                r.ngram = row.ngram;
                r.f_at = row.count;
                r.f_ot = row.count_no_rt;
                r.f_rt = row.count - row.count_no_rt;
                r.p_at = ratio(r.f_at, z.totals.at);
                r.p_ot = ratio(r.f_ot, z.totals.ot);
                r.p_rt = ratio(r.f_rt, z.totals.rt);
                if (!freq_matches(row.freq, r.p_at) || !freq_matches(row.freq_no_rt, r.p_ot)) {
                    throw IntegrityError(tsv_path.string() + ": frequency column disagrees with counts for '" + r.ngram +
                                         "'");
                }
                r.r_at = row.rank;
                r.r_ot = row.rank_no_rt;
                const auto& rr = rank_rt[z.records.size()];
                if (!rr.is_null()) r.r_rt = rr.get<double>();
                z.records.push_back(std::move(r));
            }
            if (z.records.size() != rows) throw IntegrityError(tsv_path.string() + ": fewer rows than metadata");
            validate_zipf(z);

            cell.info.date = date;
            cell.info.rows = rows;
            cell.info.truncated = z.truncated;
            cell.info.truncate_at = z.truncate_at;
            cell.info.totals = z.totals;
            cell.info.lexicon = z.lexicon;
            cell.info.volume = z.volume;
            cell.info.tsv_bytes = tsv.size();
            cell.info.tsv_crc = crc32_of(tsv);
            cell.info.meta_bytes = meta_text.size();
            cell.info.meta_crc = crc32_of(meta_text);
            return cell;
        } catch (const IntegrityError& e) {
            const std::string what = e.what();
            if (what.find(tsv_path.string()) != std::string::npos || what.find(meta_path.string()) != std::string::npos) {
                throw;
            }
            throw IntegrityError(tsv_path.string() + ": " + what);
        } catch (const ParseError& e) {
            throw IntegrityError(tsv_path.string() + ": " + e.what());
        } catch (const ojson::exception& e) {
            throw IntegrityError(meta_path.string() + ": " + e.what());
        }
    }
}

// Read-only view of a whole file; stays valid after the path is replaced.
class MappedFile {
public:
    explicit MappedFile(const fs::path& path) {
        const int fd = ::open(path.c_str(), O_RDONLY | O_CLOEXEC);
        if (fd < 0) throw NotFoundError("cannot open " + path.string());
        struct stat st {};
        if (::fstat(fd, &st) == 0 && st.st_size > 0) {
            void* p = ::mmap(nullptr, static_cast<std::size_t>(st.st_size), PROT_READ, MAP_PRIVATE, fd, 0);
            if (p != MAP_FAILED) {
                data_ = static_cast<const char*>(p);
                size_ = static_cast<std::size_t>(st.st_size);
            }
        }
        ::close(fd);
    }
    ~MappedFile() {
        if (data_) ::munmap(const_cast<char*>(data_), size_);
    }
    MappedFile(const MappedFile&) = delete;
    MappedFile& operator=(const MappedFile&) = delete;
    std::string_view bytes() const noexcept { return {data_, size_}; }

private:
    const char* data_ = nullptr;
    std::size_t size_ = 0;
};

// One cell's postings ordered by n-gram bytes.
struct Run {
    struct Entry {
        std::uint32_t offset;
        std::uint32_t length;
        Posting posting;
    };
    std::string strings;
    std::vector<Entry> entries;

    std::string_view key(const Entry& e) const { return std::string_view(strings).substr(e.offset, e.length); }

    const Posting* find(std::string_view ngram) const {
        const auto it = std::lower_bound(entries.begin(), entries.end(), ngram,
                                         [&](const Entry& e, std::string_view k) { return key(e) < k; });
        return it != entries.end() && key(*it) == ngram ? &it->posting : nullptr;
    }
};

Run make_run(const DailyZipf& z) {
    const auto date = z.bucket.date.serial();
    std::vector<std::pair<std::uint64_t, std::uint32_t>> keyed(z.records.size());
    for (std::uint32_t row = 0; row < keyed.size(); ++row) keyed[row] = {order_prefix(z.records[row].ngram), row};
    std::sort(keyed.begin(), keyed.end(), [&](const auto& a, const auto& b) {
        if (a.first != b.first) return a.first < b.first;
        return z.records[a.second].ngram < z.records[b.second].ngram;
    });
    std::vector<std::uint32_t> order(keyed.size());
    for (std::size_t k = 0; k < keyed.size(); ++k) order[k] = keyed[k].second;
    Run run;
    std::size_t bytes = 0;
    for (const auto& r : z.records) bytes += r.ngram.size();
    run.strings.reserve(bytes);
    run.entries.reserve(order.size());
    for (const auto row : order) {
        const auto& r = z.records[row];
        run.entries.push_back({static_cast<std::uint32_t>(run.strings.size()), static_cast<std::uint32_t>(r.ngram.size()),
                               Posting{date, row, r.f_at, r.f_ot, rank2(r.r_at), rank2(r.r_ot), rank2(r.r_rt)}});
        run.strings += r.ngram;
    }
    return run;
}

// Buffered positional writes into one region of a file.
class RegionWriter {
public:
    RegionWriter(int fd, std::uint64_t offset, const fs::path& path) : fd_(fd), offset_(offset), path_(path) {}
    ~RegionWriter() = default;
    void write(const void* data, std::size_t n) {
        buffer_.append(static_cast<const char*>(data), n);
        if (buffer_.size() >= (1u << 20)) flush();
    }
    template <typename T>
    void put(const T& value) {
        write(&value, sizeof(T));
    }
    void flush() {
        std::size_t done = 0;
        while (done < buffer_.size()) {
            const auto w = ::pwrite(fd_, buffer_.data() + done, buffer_.size() - done, static_cast<off_t>(offset_ + done));
            if (w < 0 && errno == EINTR) continue;
            if (w <= 0) throw std::runtime_error("short write to " + path_.string());
            done += static_cast<std::size_t>(w);
        }
        offset_ += done;
        buffer_.clear();
    }

private:
    int fd_;
    std::uint64_t offset_;
    const fs::path& path_;
    std::string buffer_;
};

}  // namespace

// ---------------------------------------------------------------------------

// The persisted index (memory-mapped) plus one sorted run per cell written
// since it was loaded. flush() merges both into a new index file.
struct Store::Partition {
    std::map<std::int32_t, CellInfo> cells;

    std::shared_ptr<MappedFile> file;
    std::string_view blob;
    IndexHeader header{};
    bool flat = false;
    std::set<std::int32_t> replaced;  // dates whose indexed postings are superseded by a run
    std::map<std::int32_t, Run> runs;

    bool dirty = false;
    FileStamp manifest_stamp;

    std::size_t ngrams_offset() const { return sizeof(IndexHeader) + header.cell_count * sizeof(IndexCell); }
    std::size_t postings_offset() const { return ngrams_offset() + header.ngram_count * sizeof(IndexNgram); }
    std::size_t strings_offset() const { return postings_offset() + header.posting_count * sizeof(Posting); }
    std::size_t table_offset() const { return strings_offset() + ((header.string_bytes + 7) & ~std::uint64_t{7}); }

    IndexNgram ngram_at(std::uint64_t k) const { return load_at<IndexNgram>(blob, ngrams_offset() + k * sizeof(IndexNgram)); }
    std::string_view text_of(const IndexNgram& ng) const { return blob.substr(strings_offset() + ng.string_offset, ng.string_length); }
    Posting posting_at(std::uint64_t k) const { return load_at<Posting>(blob, postings_offset() + k * sizeof(Posting)); }

    // Indexed postings of `ngram`, minus superseded dates.
    void base_postings(std::string_view ngram, std::vector<Posting>& out) const {
        if (!flat || header.ngram_count == 0) return;
        const auto mask = header.hash_buckets - 1;
        for (auto slot = fnv1a(ngram) & mask;; slot = (slot + 1) & mask) {
            const auto entry = load_at<std::uint64_t>(blob, table_offset() + slot * 8);
            if (entry == 0) return;
            const auto ng = ngram_at(entry - 1);
            if (text_of(ng) != ngram) continue;
            append_live(ng, out);
            return;
        }
    }

    void append_live(const IndexNgram& ng, std::vector<Posting>& out) const {
        for (std::uint64_t k = 0; k < ng.posting_count; ++k) {
            const auto p = posting_at(ng.posting_offset + k);
            if (!replaced.contains(p.date)) out.push_back(p);
        }
    }

    std::vector<Posting> lookup(std::string_view ngram) const {
        std::vector<Posting> out;
        base_postings(ngram, out);
        if (runs.empty()) return out;
        for (const auto& [date, run] : runs) {
            if (const auto* p = run.find(ngram)) out.push_back(*p);
        }
        std::sort(out.begin(), out.end(), [](const Posting& a, const Posting& b) { return a.date < b.date; });
        return out;
    }

    void add(const DailyZipf& z) {
        const auto date = z.bucket.date.serial();
        if (flat) replaced.insert(date);
        runs[date] = make_run(z);
    }

    // Calls visit(ngram, postings) for every n-gram in byte order, postings by date.
    template <typename Visit>
    void merge(Visit&& visit) const {
        struct Cursor {
            std::string_view key;
            std::size_t source;  // 0 = index, else a run
            std::size_t pos;
        };
        std::vector<const Run*> sources{nullptr};
        for (const auto& [date, run] : runs) sources.push_back(&run);
        auto key_at = [&](std::size_t source, std::size_t pos) -> std::optional<std::string_view> {
            if (source == 0) {
                if (!flat || pos >= header.ngram_count) return std::nullopt;
                return text_of(ngram_at(pos));
            }
            const auto* run = sources[source];
            if (pos >= run->entries.size()) return std::nullopt;
            return run->key(run->entries[pos]);
        };
        auto later = [](const Cursor& a, const Cursor& b) { return a.key != b.key ? a.key > b.key : a.source > b.source; };
        std::priority_queue<Cursor, std::vector<Cursor>, decltype(later)> heap(later);
        for (std::size_t s = 0; s < sources.size(); ++s) {
            if (const auto k = key_at(s, 0)) heap.push({*k, s, 0});
        }
        std::vector<Posting> postings;
        while (!heap.empty()) {
            const auto key = heap.top().key;
            postings.clear();
            while (!heap.empty() && heap.top().key == key) {
                const auto c = heap.top();
                heap.pop();
                if (c.source == 0) {
                    append_live(ngram_at(c.pos), postings);
                } else {
                    postings.push_back(sources[c.source]->entries[c.pos].posting);
                }
                if (const auto k = key_at(c.source, c.pos + 1)) heap.push({*k, c.source, c.pos + 1});
            }
            if (postings.empty()) continue;
            std::sort(postings.begin(), postings.end(), [](const Posting& a, const Posting& b) { return a.date < b.date; });
            visit(key, std::span<const Posting>(postings));
        }
    }
};

namespace {

std::string manifest_text(const std::map<std::int32_t, CellInfo>& cells) {
    std::string out;
    for (const auto& [serial, info] : cells) {
        const auto date = info.date.to_string();
        out += date + std::string(kMetaSuffix) + "\t" + std::to_string(info.meta_bytes) + "\t" + hex32(info.meta_crc) + "\n";
        out += date + ".tsv\t" + std::to_string(info.tsv_bytes) + "\t" + hex32(info.tsv_crc) + "\n";
    }
    return out;
}

// Streams the merged index of `p` into `path`. Layout: header, cells,
// n-gram entries, postings, strings (padded to 8), open-addressing table.
void write_index(const fs::path& path, const Store::Partition& p, std::uint64_t fingerprint) {
    IndexHeader header{};
    std::memcpy(header.magic, kIndexMagic, sizeof kIndexMagic);
    header.manifest_fingerprint = fingerprint;
    header.cell_count = static_cast<std::uint32_t>(p.cells.size());
    p.merge([&](std::string_view key, std::span<const Posting> postings) {
        ++header.ngram_count;
        header.posting_count += postings.size();
        header.string_bytes += key.size();
    });
    header.hash_buckets = bucket_count_for(header.ngram_count);

    const std::uint64_t ngrams_at = sizeof(IndexHeader) + header.cell_count * sizeof(IndexCell);
    const std::uint64_t postings_at = ngrams_at + header.ngram_count * sizeof(IndexNgram);
    const std::uint64_t strings_at = postings_at + header.posting_count * sizeof(Posting);
    const std::uint64_t table_at = strings_at + ((header.string_bytes + 7) & ~std::uint64_t{7});

    const int fd = ::open(path.c_str(), O_WRONLY | O_CREAT | O_TRUNC | O_CLOEXEC, 0644);
    if (fd < 0) throw std::runtime_error("cannot write " + path.string());
    try {
        RegionWriter head(fd, 0, path);
        head.put(header);
        for (const auto& [serial, c] : p.cells) {
            IndexCell ic{};
            ic.date = serial;
            ic.truncated = c.truncated ? 1 : 0;
            ic.rows = c.rows;
            ic.truncate_at = c.truncate_at;
            ic.total_at = c.totals.at, ic.total_ot = c.totals.ot, ic.total_rt = c.totals.rt;
            ic.lex_at = c.lexicon.at, ic.lex_ot = c.lexicon.ot, ic.lex_rt = c.lexicon.rt;
            ic.vol_ot = c.volume.ot, ic.vol_rt = c.volume.rt;
            ic.tsv_bytes = c.tsv_bytes, ic.meta_bytes = c.meta_bytes;
            ic.tsv_crc = c.tsv_crc, ic.meta_crc = c.meta_crc;
            head.put(ic);
        }
        head.flush();

        RegionWriter ngrams(fd, ngrams_at, path);
        RegionWriter posts(fd, postings_at, path);
        RegionWriter strings(fd, strings_at, path);
        std::vector<std::uint64_t> table(header.hash_buckets, 0);
        const auto mask = header.hash_buckets - 1;
        std::uint64_t k = 0;
        std::uint64_t string_offset = 0;
        std::uint64_t posting_offset = 0;
        p.merge([&](std::string_view key, std::span<const Posting> postings) {
            ngrams.put(IndexNgram{string_offset, key.size(), posting_offset, postings.size()});
            posts.write(postings.data(), postings.size_bytes());
            strings.write(key.data(), key.size());
            string_offset += key.size();
            posting_offset += postings.size();
            auto slot = fnv1a(key) & mask;
            while (table[slot] != 0) slot = (slot + 1) & mask;
            table[slot] = ++k;
        });
        const std::string pad(((header.string_bytes + 7) & ~std::uint64_t{7}) - header.string_bytes, '\0');
        strings.write(pad.data(), pad.size());
        ngrams.flush();
        posts.flush();
        strings.flush();
        RegionWriter tail(fd, table_at, path);
        tail.write(table.data(), table.size() * sizeof(std::uint64_t));
        tail.flush();
    } catch (...) {
        ::close(fd);
        throw;
    }
    if (::close(fd) != 0) throw std::runtime_error("cannot write " + path.string());
}

}  // namespace

// ---------------------------------------------------------------------------

Store::Store(fs::path root, Mode mode) : root_(std::move(root)), mode_(mode) {
    if (mode_ == Mode::read_write) {
        fs::create_directories(root_);
    } else if (!fs::is_directory(root_)) {
        throw NotFoundError("store root " + root_.string() + " does not exist");
    }
}

Store::~Store() {
    try {
        flush();
    } catch (...) {
        // index is rebuilt from the day files on next open
    }
}

bool Store::valid_language_code(std::string_view code) noexcept {
    if (code.empty() || code.size() > 32 || code.front() == '.' || code.front() == '-') return false;
    return std::all_of(code.begin(), code.end(), [](char c) {
        return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9') || c == '-' || c == '_';
    });
}

fs::path Store::partition_dir(const fs::path& root, std::string_view language, int n) {
    if (!valid_language_code(language)) throw std::invalid_argument("invalid language code '" + std::string(language) + "'");
    validate_order(n);
    return root / std::string(language) / (std::to_string(n) + "gram");
}

void Store::fault(std::string_view stage) const {
    if (fault_hook_) fault_hook_(stage);
}

std::unique_ptr<Store::Partition> Store::rebuild_partition(std::string_view language, int n) const {
    auto p = std::make_unique<Partition>();
    const auto dir = partition_dir(root_, language, n);
    for (const auto date : committed_dates(dir)) {
        auto cell = read_cell(root_, language, n, date);
        p->add(cell.zipf);
        p->cells.emplace(date.serial(), cell.info);
    }
    p->manifest_stamp = stamp_of(dir / kManifestFile);
    p->dirty = mode_ == Mode::read_write && !p->cells.empty();
    return p;
}

std::unique_ptr<Store::Partition> Store::load_partition(std::string_view language, int n) const {
    const auto dir = partition_dir(root_, language, n);
    std::error_code ec;
    if (!fs::is_directory(dir, ec)) return std::make_unique<Partition>();
    if (mode_ == Mode::read_write) recover_partition(dir);

    const auto dates = committed_dates(dir);
    const auto manifest_path = dir / kManifestFile;
    const auto index_path = dir / kIndexFile;
    if (!fs::exists(manifest_path, ec) || !fs::exists(index_path, ec)) return rebuild_partition(language, n);

    auto p = std::make_unique<Partition>();
    p->manifest_stamp = stamp_of(manifest_path);
    const auto manifest = read_file(manifest_path);
    p->file = std::make_shared<MappedFile>(index_path);
    p->blob = p->file->bytes();
    if (p->blob.size() < sizeof(IndexHeader)) return rebuild_partition(language, n);
    p->header = load_at<IndexHeader>(p->blob, 0);
    p->flat = true;
    const auto& h = p->header;
    const bool sane = std::memcmp(h.magic, kIndexMagic, sizeof kIndexMagic) == 0 && h.cell_count == dates.size() &&
                      std::has_single_bit(h.hash_buckets) && p->table_offset() + h.hash_buckets * 8 == p->blob.size();
    if (!sane || h.manifest_fingerprint != fnv1a(manifest)) return rebuild_partition(language, n);

    for (std::uint32_t k = 0; k < h.cell_count; ++k) {
        const auto ic = load_at<IndexCell>(p->blob, sizeof(IndexHeader) + k * sizeof(IndexCell));
        if (Date::from_serial(ic.date) != dates[k]) return rebuild_partition(language, n);
        CellInfo c;
        c.date = Date::from_serial(ic.date);
        c.rows = ic.rows;
        c.truncated = ic.truncated != 0;
        c.truncate_at = ic.truncate_at;
        c.totals = {ic.total_at, ic.total_ot, ic.total_rt};
        c.lexicon = {ic.lex_at, ic.lex_ot, ic.lex_rt};
        c.volume = {ic.vol_ot, ic.vol_rt};
        c.tsv_bytes = ic.tsv_bytes;
        c.tsv_crc = ic.tsv_crc;
        c.meta_bytes = ic.meta_bytes;
        c.meta_crc = ic.meta_crc;
        p->cells.emplace(ic.date, c);
    }
    return p;
}

Store::Partition& Store::partition(std::string_view language, int n) const {
    auto it = partitions_.find(std::pair<std::string, int>{std::string(language), n});
    if (it != partitions_.end()) {
        auto& p = *it->second;
        if (p.dirty) return p;
        // Another process may have written since we loaded.
        if (stamp_of(partition_dir(root_, language, n) / kManifestFile) == p.manifest_stamp) return p;
        it->second = load_partition(language, n);
        return *it->second;
    }
    auto loaded = load_partition(language, n);
    auto& ref = *loaded;
    partitions_.emplace(std::pair<std::string, int>{std::string(language), n}, std::move(loaded));
    return ref;
}

void Store::put_day(const DailyZipf& z, bool overwrite) {
    if (mode_ != Mode::read_write) throw std::logic_error("store opened read-only");
    validate_zipf(z);
    const auto& language = z.bucket.language;
    const auto dir = partition_dir(root_, language, z.n);
    const auto date = z.bucket.date;

    std::lock_guard lock(mu_);
    auto& p = partition(language, z.n);
    const auto meta_path = dir / (date.to_string() + std::string(kMetaSuffix));
    const auto tsv_path = dir / (date.to_string() + ".tsv");
    std::error_code ec;
    const bool exists = fs::exists(meta_path, ec);
    if (exists && !overwrite) throw AlreadyExistsError("cell " + cell_name(language, z.n, date) + " already exists");

    fs::create_directories(dir);
    if (!p.dirty) {
        // The persisted index goes stale from here until flush().
        fs::remove(dir / kIndexFile, ec);
        p.dirty = true;
    }

    const auto tsv = zipf_to_tsv(z);
    const auto meta = build_meta(z, tsv);
    const auto tsv_tmp = temp_path(tsv_path);
    const auto meta_tmp = temp_path(meta_path);
    bool committed = false;
    try {
        write_file(tsv_tmp, tsv);
        write_file(meta_tmp, meta);
        fault("temp_written");
        fs::rename(tsv_tmp, tsv_path);
        committed = true;
        fault("tsv_renamed");
        fs::rename(meta_tmp, meta_path);
    } catch (...) {
        fs::remove(tsv_tmp, ec);
        // past the TSV rename the pending sidecar is what readers and recovery use
        if (!committed) fs::remove(meta_tmp, ec);
        throw;
    }

    p.add(z);
    CellInfo info;
    info.date = date;
    info.rows = z.records.size();
    info.truncated = z.truncated;
    info.truncate_at = z.truncate_at;
    info.totals = z.totals;
    info.lexicon = z.lexicon;
    info.volume = z.volume;
    info.tsv_bytes = tsv.size();
    info.tsv_crc = crc32_of(tsv);
    info.meta_bytes = meta.size();
    info.meta_crc = crc32_of(meta);
    p.cells[date.serial()] = info;
}

void Store::persist(std::string_view language, int n, Partition& p) {
    const auto dir = partition_dir(root_, language, n);
    fs::create_directories(dir);
    const auto manifest = manifest_text(p.cells);
    write_atomic(dir / kManifestFile, manifest);
    const auto index_path = dir / kIndexFile;
    const auto tmp = temp_path(index_path);
    try {
        write_index(tmp, p, fnv1a(manifest));
        fs::rename(tmp, index_path);
    } catch (...) {
        std::error_code ec;
        fs::remove(tmp, ec);
        throw;
    }
    // the new file replaces the old index and the staged runs
    p.file = std::make_shared<MappedFile>(index_path);
    p.blob = p.file->bytes();
    p.header = load_at<IndexHeader>(p.blob, 0);
    p.flat = true;
    p.runs.clear();
    p.replaced.clear();
    p.manifest_stamp = stamp_of(dir / kManifestFile);
    p.dirty = false;
}

void Store::flush() {
    if (mode_ != Mode::read_write) return;
    std::lock_guard lock(mu_);
    for (auto& [key, p] : partitions_) {
        if (p->dirty) persist(key.first, key.second, *p);
    }
}

void Store::rebuild_index(std::string_view language, int n) {
    std::lock_guard lock(mu_);
    auto p = rebuild_partition(language, n);
    if (mode_ == Mode::read_write && !p->cells.empty()) persist(language, n, *p);
    partitions_[std::pair<std::string, int>{std::string(language), n}] = std::move(p);
}

void Store::invalidate_cache() const {
    std::lock_guard lock(mu_);
    for (auto it = partitions_.begin(); it != partitions_.end();) {
        it = it->second->dirty ? std::next(it) : partitions_.erase(it);
    }
}

DailyZipf Store::get_day(Date date, std::string_view language, int n) const {
    return read_cell(root_, language, n, date).zipf;
}

bool Store::has_day(Date date, std::string_view language, int n) const {
    std::error_code ec;
    return fs::exists(partition_dir(root_, language, n) / (date.to_string() + std::string(kMetaSuffix)), ec);
}

std::vector<SeriesPoint> Store::get_series(std::string_view ngram, std::string_view language, int n,
                                           const DateRange& range) const {
    std::vector<SeriesPoint> out;
    out.reserve(range.days());
    for (Date d = range.from; d <= range.to; d = d + 1) out.push_back({d, std::nullopt});
    if (!valid_language_code(language)) return out;

    std::lock_guard lock(mu_);
    const auto& p = partition(language, n);
    const auto postings = p.lookup(ngram);
    const auto first = std::lower_bound(postings.begin(), postings.end(), range.from.serial(),
                                        [](const Posting& a, std::int32_t d) { return a.date < d; });
    for (auto it = first; it != postings.end() && it->date <= range.to.serial(); ++it) {
        const auto& cell = p.cells.at(it->date);
        NgramRecord r;
        r.ngram = std::string(ngram);
        r.f_at = it->f_at;
        r.f_ot = it->f_ot;
        r.f_rt = it->f_at - it->f_ot;
        r.p_at = ratio(r.f_at, cell.totals.at);
        r.p_ot = ratio(r.f_ot, cell.totals.ot);
        r.p_rt = ratio(r.f_rt, cell.totals.rt);
        r.r_at = static_cast<double>(it->r2_at) / 2.0;
        if (it->r2_ot) r.r_ot = static_cast<double>(it->r2_ot) / 2.0;
        if (it->r2_rt) r.r_rt = static_cast<double>(it->r2_rt) / 2.0;
        out[static_cast<std::size_t>(Date::from_serial(it->date) - range.from)].record = std::move(r);
    }
    return out;
}

std::optional<CellInfo> Store::cell_info(Date date, std::string_view language, int n) const {
    if (!valid_language_code(language)) return std::nullopt;
    std::lock_guard lock(mu_);
    const auto& p = partition(language, n);
    const auto it = p.cells.find(date.serial());
    if (it == p.cells.end()) return std::nullopt;
    return it->second;
}

std::vector<CellInfo> Store::cells(std::string_view language, int n) const {
    std::vector<CellInfo> out;
    if (!valid_language_code(language)) return out;
    std::lock_guard lock(mu_);
    for (const auto& [serial, info] : partition(language, n).cells) out.push_back(info);
    return out;
}

std::vector<std::string> Store::languages() const {
    std::vector<std::string> out;
    std::error_code ec;
    if (!fs::is_directory(root_, ec)) return out;
    for (const auto& entry : fs::directory_iterator(root_)) {
        const auto name = entry.path().filename().string();
        if (!entry.is_directory() || !valid_language_code(name)) continue;
        for (int n = kMinOrder; n <= kMaxOrder; ++n) {
            if (!committed_dates(partition_dir(root_, name, n)).empty()) {
                out.push_back(name);
                break;
            }
        }
    }
    std::sort(out.begin(), out.end());
    return out;
}

bool Store::has_partition(std::string_view language, int n) const {
    if (!valid_language_code(language) || n < kMinOrder || n > kMaxOrder) return false;
    return !committed_dates(partition_dir(root_, language, n)).empty();
}

std::vector<LanguageCoverage> Store::coverage() const {
    std::vector<LanguageCoverage> out;
    for (const auto& language : languages()) {
        std::set<Date> dates;
        for (int n = kMinOrder; n <= kMaxOrder; ++n) {
            for (const auto& d : committed_dates(partition_dir(root_, language, n))) dates.insert(d);
        }
        if (dates.empty()) continue;
        out.push_back({language, *dates.begin(), *dates.rbegin(), dates.size()});
    }
    return out;
}

std::vector<std::string> Store::verify() const {
    std::vector<std::string> problems;
    for (const auto& language : languages()) {
        for (int n = kMinOrder; n <= kMaxOrder; ++n) {
            const auto dir = partition_dir(root_, language, n);
            const auto dates = committed_dates(dir);
            if (dates.empty()) continue;
            const auto manifest_path = dir / kManifestFile;
            std::string manifest;
            try {
                manifest = read_file(manifest_path);
            } catch (const NotFoundError&) {
                problems.push_back(manifest_path.string() + ": missing");
                continue;
            }
            std::set<std::string> listed;
            std::istringstream lines(manifest);
            std::string line;
            while (std::getline(lines, line)) {
                const auto t1 = line.find('\t');
                const auto t2 = line.find('\t', t1 + 1);
                if (t1 == std::string::npos || t2 == std::string::npos) {
                    problems.push_back(manifest_path.string() + ": malformed line '" + line + "'");
                    continue;
                }
                const auto name = line.substr(0, t1);
                listed.insert(name);
                std::string content;
                try {
                    content = read_file(dir / name);
                } catch (const NotFoundError&) {
                    problems.push_back((dir / name).string() + ": listed in manifest but missing");
                    continue;
                }
                if (std::to_string(content.size()) != line.substr(t1 + 1, t2 - t1 - 1) ||
                    hex32(crc32_of(content)) != line.substr(t2 + 1)) {
                    problems.push_back((dir / name).string() + ": checksum mismatch");
                }
            }
            for (const auto& d : dates) {
                for (const auto& name : {d.to_string() + ".tsv", d.to_string() + std::string(kMetaSuffix)}) {
                    if (!listed.count(name)) problems.push_back((dir / name).string() + ": not in manifest");
                }
            }
        }
    }
    return problems;
}

}  // namespace storywrangler
