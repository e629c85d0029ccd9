#pragma once

// Run archive layout (little-endian):
//   "SVEMPARC"            8 bytes magic
//   u32 version
//   u64 n, n bytes        configuration text
//   u64 seed              effective seed
//   u32 k                 number of statistics
//   k x { u32 n, n bytes name, u64 value bits }
//   u64 checksum          FNV-1a of the statistics block
// The checksum guards the recorded statistics; the seed and configuration are
// replayed, so edits to them surface as a mismatch rather than corruption.

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "svemp/cli/config.hpp"
#include "svemp/errors.hpp"

namespace svemp::cli {

inline constexpr char kArchiveMagic[8] = {'S', 'V', 'E', 'M', 'P', 'A', 'R', 'C'};
inline constexpr std::uint32_t kArchiveVersion = 1;

struct Statistic {
    std::string name;
    std::uint64_t bits = 0;

    static Statistic real(std::string name, double v) { return {std::move(name), std::bit_cast<std::uint64_t>(v)}; }
    static Statistic digest(std::string name, std::uint64_t v) { return {std::move(name), v}; }
    bool is_digest() const { return name.rfind("digest.", 0) == 0; }
    std::string show() const {
        if (is_digest()) return hex64(bits);
        char buf[40];
        std::snprintf(buf, sizeof buf, "%.17g", std::bit_cast<double>(bits));
        return buf;
    }
};

struct Archive {
    std::string config_text;
    std::uint64_t seed = 0;
    std::vector<Statistic> stats;
};

namespace detail {

template <class T>
void put(std::string& out, T v) {
    static_assert(std::is_trivially_copyable_v<T>);
    char buf[sizeof(T)];
    std::memcpy(buf, &v, sizeof(T));
    out.append(buf, sizeof(T));
}

class Reader {
public:
    explicit Reader(const std::string& data) : data_(data) {}
    template <class T>
    T get(const char* what) {
        if (pos_ + sizeof(T) > data_.size()) throw ArchiveCorrupt(std::string("archive truncated in ") + what);
        T v;
        std::memcpy(&v, data_.data() + pos_, sizeof(T));
        pos_ += sizeof(T);
        return v;
    }
    std::string bytes(std::uint64_t n, const char* what) {
        if (n > data_.size() - pos_) throw ArchiveCorrupt(std::string("archive truncated in ") + what);
        std::string s = data_.substr(pos_, n);
        pos_ += n;
        return s;
    }
    std::size_t pos() const { return pos_; }
    std::size_t size() const { return data_.size(); }

private:
    const std::string& data_;
    std::size_t pos_ = 0;
};

inline std::string stats_block(const std::vector<Statistic>& stats) {
    std::string out;
    put<std::uint32_t>(out, static_cast<std::uint32_t>(stats.size()));
    for (const auto& s : stats) {
        put<std::uint32_t>(out, static_cast<std::uint32_t>(s.name.size()));
        out += s.name;
        put<std::uint64_t>(out, s.bits);
    }
    return out;
}

}  // namespace detail

static_assert(std::endian::native == std::endian::little, "archive format assumes little-endian");

inline std::string encode(const Archive& a) {
    std::string out(kArchiveMagic, sizeof kArchiveMagic);
    detail::put<std::uint32_t>(out, kArchiveVersion);
    detail::put<std::uint64_t>(out, a.config_text.size());
    out += a.config_text;
    detail::put<std::uint64_t>(out, a.seed);
    const std::string block = detail::stats_block(a.stats);
    out += block;
    detail::put<std::uint64_t>(out, fnv1a(block.data(), block.size()));
    return out;
}

inline Archive decode(const std::string& data) {
    detail::Reader r(data);
    if (r.bytes(sizeof kArchiveMagic, "magic") != std::string(kArchiveMagic, sizeof kArchiveMagic))
        throw ArchiveCorrupt("not a run archive (bad magic)");
    const auto version = r.get<std::uint32_t>("version");
    if (version != kArchiveVersion)
        throw ArchiveCorrupt("unsupported archive version " + std::to_string(version));
    Archive a;
    a.config_text = r.bytes(r.get<std::uint64_t>("config length"), "config");
    a.seed = r.get<std::uint64_t>("seed");
    const std::size_t block_start = r.pos();
    const auto k = r.get<std::uint32_t>("statistics count");
    for (std::uint32_t i = 0; i < k; ++i) {
        Statistic s;
        s.name = r.bytes(r.get<std::uint32_t>("statistic name length"), "statistic name");
        s.bits = r.get<std::uint64_t>("statistic value");
        a.stats.push_back(std::move(s));
    }
    const std::size_t block_end = r.pos();
    const auto sum = r.get<std::uint64_t>("checksum");
    if (r.pos() != r.size()) throw ArchiveCorrupt("trailing bytes after checksum");
    if (sum != fnv1a(data.data() + block_start, block_end - block_start))
        throw ArchiveCorrupt("checksum mismatch in statistics block");
    return a;
}

inline void write_archive(const std::string& path, const Archive& a) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot write archive '" + path + "'");
    const std::string bytes = encode(a);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw Error("failed writing archive '" + path + "'");
}

inline Archive read_archive(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ArchiveCorrupt("cannot open archive '" + path + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    return decode(ss.str());
}

}  // namespace svemp::cli
