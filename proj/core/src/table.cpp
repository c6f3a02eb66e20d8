#include "cstat/cumulants.hpp"

#include "cstat/common.hpp"
#include "cstat/threads.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstring>
#include <ctime>
#include <sstream>
#include <string>

namespace cstat {

namespace {

constexpr char kMagic[8] = {'C', 'S', 'T', 'A', 'T', 'T', 'A', 'B'};
constexpr std::uint32_t kFormatVersion = 1;
constexpr std::size_t kHeaderBytes = 64;
constexpr std::size_t kRowBytes = 7 * 8;

void append_u32(std::string& buf, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) buf.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void append_u64(std::string& buf, std::uint64_t v) {
    for (int i = 0; i < 8; ++i) buf.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void append_f64(std::string& buf, double x) {
    append_u64(buf, std::bit_cast<std::uint64_t>(x));
}

std::uint32_t parse_u32(const std::string& buf, std::size_t at) {
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) {
        v |= static_cast<std::uint32_t>(static_cast<unsigned char>(buf[at + i])) << (8 * i);
    }
    return v;
}

std::uint64_t parse_u64(const std::string& buf, std::size_t at) {
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) {
        v |= static_cast<std::uint64_t>(static_cast<unsigned char>(buf[at + i])) << (8 * i);
    }
    return v;
}

double parse_f64(const std::string& buf, std::size_t at) {
    return std::bit_cast<double>(parse_u64(buf, at));
}

std::uint64_t fnv1a64(const std::string& bytes) {
    std::uint64_t h = 14695981039346656037ULL;
    for (char c : bytes) {
        h ^= static_cast<unsigned char>(c);
        h *= 1099511628211ULL;
    }
    return h;
}

std::string encode_payload(const CumulantTable::Header& h,
                           const std::vector<CumulantSet>& rows) {
    std::string buf;
    buf.reserve(kHeaderBytes + rows.size() * kRowBytes);
    buf.append(kMagic, sizeof(kMagic));
    append_u32(buf, kFormatVersion);
    append_u32(buf, 0); // reserved
    append_f64(buf, h.s_min);
    append_f64(buf, h.s_max);
    append_f64(buf, h.step);
    append_u64(buf, h.row_count);
    append_f64(buf, h.tau);
    append_u64(buf, static_cast<std::uint64_t>(h.build_unix_time));
    for (const auto& r : rows) {
        append_f64(buf, r.k1);
        append_f64(buf, r.k2);
        append_f64(buf, r.k3);
        append_f64(buf, r.k11);
        append_f64(buf, r.k12);
        append_f64(buf, r.k21);
        append_f64(buf, r.k03);
    }
    return buf;
}

} // namespace

void CumulantTable::recompute_checksum() {
    checksum_ = fnv1a64(encode_payload(header_, rows_));
}

std::string CumulantTable::checksum_hex() const {
    static const char* digits = "0123456789abcdef";
    std::string out(16, '0');
    std::uint64_t v = checksum_;
    for (int i = 15; i >= 0; --i) {
        out[static_cast<std::size_t>(i)] = digits[v & 0xf];
        v >>= 4;
    }
    return out;
}

CumulantTable CumulantTable::build(double s_min, double s_max, double step,
                                   double tau, int n_threads,
                                   std::int64_t timestamp) {
    if (!(s_min > 0.0) || !(s_max >= s_min) || !(step > 0.0)) {
        throw validation_error("E_DOMAIN", "table build: need 0 < s_min <= s_max and step > 0");
    }
    if (!(tau > 0.0 && tau < 1.0)) {
        throw validation_error("E_DOMAIN", "table build: tau must lie in (0, 1)");
    }
    CumulantTable t;
    t.header_.s_min = s_min;
    t.header_.s_max = s_max;
    t.header_.step = step;
    t.header_.tau = tau;
    t.header_.row_count =
        static_cast<std::uint64_t>(std::llround((s_max - s_min) / step)) + 1;
    t.header_.build_unix_time =
        timestamp >= 0 ? timestamp : static_cast<std::int64_t>(std::time(nullptr));

    t.rows_.resize(t.header_.row_count);
    parallel_for(t.rows_.size(), n_threads, [&](std::size_t j) {
        double s = s_min + static_cast<double>(j) * step;
        t.rows_[j] = cumulants_direct(s, tau);
    });
    t.recompute_checksum();

    // Probe interpolation accuracy at midpoints spread over the
    // interpolated region. k3 and k21 change sign along the grid, so their
    // check uses a floor on the denominator; the columns consumed by the
    // moment corrections are held to a strict relative bound.
    if (t.rows_.size() >= 2) {
        std::size_t stride = std::max<std::size_t>(1, t.rows_.size() / 512);
        for (std::size_t j = 0; j + 1 < t.rows_.size(); j += stride) {
            double mid = s_min + (static_cast<double>(j) + 0.5) * step;
            if (mid < interpolation_cutoff || mid > s_max) continue;
            CumulantSet a = t.at(mid);
            CumulantSet b = cumulants_direct(mid, tau);
            auto rel = [](double got, double want) {
                return std::abs(got - want) / std::max(std::abs(want), 1e-300);
            };
            auto soft = [](double got, double want) {
                return std::abs(got - want) / std::max(std::abs(want), 1e-2);
            };
            bool ok = rel(a.k1, b.k1) < 1e-5 && rel(a.k2, b.k2) < 1e-5 &&
                      rel(a.k11, b.k11) < 1e-5 && rel(a.k12, b.k12) < 1e-5 &&
                      rel(a.k03, b.k03) < 1e-5 && soft(a.k3, b.k3) < 1e-5 &&
                      soft(a.k21, b.k21) < 1e-5;
            if (!ok) {
                throw computation_error("E_TABLE_ACCURACY",
                                        "table build: interpolation probe at s = " +
                                            std::to_string(mid) + " exceeded 1e-5");
            }
        }
    }
    return t;
}

CumulantSet CumulantTable::at(double s) const {
    if (!std::isfinite(s) || s <= 0.0) {
        throw validation_error("E_DOMAIN", "table lookup: rate must be finite and positive");
    }
    if (rows_.empty()) {
        throw computation_error("E_TABLE_EMPTY", "table lookup: table has no rows");
    }
    const double s_min = header_.s_min;
    const double s_max = header_.s_max;
    const double step = header_.step;

    if (s >= s_min && s <= s_max) {
        // Exact node hits return the stored row.
        double pos = (s - s_min) / step;
        auto j = static_cast<long long>(std::llround(pos));
        if (j >= 0 && static_cast<std::uint64_t>(j) < header_.row_count &&
            s_min + static_cast<double>(j) * step == s) {
            return rows_[static_cast<std::size_t>(j)];
        }
    }
    if (s < s_min || s > s_max || s < interpolation_cutoff || rows_.size() < 2) {
        return cumulants_direct(s, header_.tau);
    }

    auto idx = static_cast<std::size_t>((s - s_min) / step);
    if (idx + 1 >= rows_.size()) idx = rows_.size() - 2;

    // Four-point cubic through the bracketing nodes. k11 crosses zero near
    // s = 1.34, where a piecewise-linear read-off cannot hold a strict
    // relative bound; the cubic's O(step^4) error can.
    if (rows_.size() >= 4) {
        std::size_t p = idx == 0 ? 0 : idx - 1;
        if (p + 3 >= rows_.size()) p = rows_.size() - 4;
        double u = (s - (s_min + static_cast<double>(p) * step)) / step;
        u = std::min(std::max(u, 0.0), 3.0);
        const double w0 = -(u - 1.0) * (u - 2.0) * (u - 3.0) / 6.0;
        const double w1 = u * (u - 2.0) * (u - 3.0) / 2.0;
        const double w2 = -u * (u - 1.0) * (u - 3.0) / 2.0;
        const double w3 = u * (u - 1.0) * (u - 2.0) / 6.0;
        const CumulantSet& r0 = rows_[p];
        const CumulantSet& r1 = rows_[p + 1];
        const CumulantSet& r2 = rows_[p + 2];
        const CumulantSet& r3 = rows_[p + 3];
        auto mix = [&](double a, double b, double c, double d) {
            return w0 * a + w1 * b + w2 * c + w3 * d;
        };
        CumulantSet out;
        out.k1 = mix(r0.k1, r1.k1, r2.k1, r3.k1);
        out.k2 = mix(r0.k2, r1.k2, r2.k2, r3.k2);
        out.k3 = mix(r0.k3, r1.k3, r2.k3, r3.k3);
        out.k11 = mix(r0.k11, r1.k11, r2.k11, r3.k11);
        out.k12 = mix(r0.k12, r1.k12, r2.k12, r3.k12);
        out.k21 = mix(r0.k21, r1.k21, r2.k21, r3.k21);
        out.k03 = mix(r0.k03, r1.k03, r2.k03, r3.k03);
        return out;
    }

    double s0 = s_min + static_cast<double>(idx) * step;
    double t = (s - s0) / step;
    t = std::min(std::max(t, 0.0), 1.0);
    const CumulantSet& a = rows_[idx];
    const CumulantSet& b = rows_[idx + 1];
    auto lerp = [t](double u, double v) { return u + t * (v - u); };
    CumulantSet out;
    out.k1 = lerp(a.k1, b.k1);
    out.k2 = lerp(a.k2, b.k2);
    out.k3 = lerp(a.k3, b.k3);
    out.k11 = lerp(a.k11, b.k11);
    out.k12 = lerp(a.k12, b.k12);
    out.k21 = lerp(a.k21, b.k21);
    out.k03 = lerp(a.k03, b.k03);
    return out;
}

void CumulantTable::save(const std::string& path) const {
    std::string buf = encode_payload(header_, rows_);
    std::string check;
    append_u64(check, fnv1a64(buf));
    buf += check;
    atomic_write_file(path, buf);
}

CumulantTable CumulantTable::load(const std::string& path) {
    std::string buf = read_file(path);
    if (buf.size() < kHeaderBytes + 8) {
        throw validation_error("E_TABLE_FORMAT", "table file too short: " + path);
    }
    if (std::memcmp(buf.data(), kMagic, sizeof(kMagic)) != 0) {
        throw validation_error("E_TABLE_FORMAT", "table file has wrong magic: " + path);
    }
    std::uint32_t version = parse_u32(buf, 8);
    if (version != kFormatVersion) {
        throw validation_error("E_TABLE_FORMAT",
                               "table file format version " + std::to_string(version) +
                                   " unsupported");
    }
    CumulantTable t;
    t.header_.s_min = parse_f64(buf, 16);
    t.header_.s_max = parse_f64(buf, 24);
    t.header_.step = parse_f64(buf, 32);
    t.header_.row_count = parse_u64(buf, 40);
    t.header_.tau = parse_f64(buf, 48);
    t.header_.build_unix_time = static_cast<std::int64_t>(parse_u64(buf, 56));

    const std::size_t expect = kHeaderBytes + t.header_.row_count * kRowBytes + 8;
    if (buf.size() != expect) {
        throw validation_error("E_TABLE_FORMAT",
                               "table file size mismatch: expected " + std::to_string(expect) +
                                   " bytes, found " + std::to_string(buf.size()));
    }
    std::uint64_t stored = parse_u64(buf, buf.size() - 8);
    std::string payload = buf.substr(0, buf.size() - 8);
    std::uint64_t computed = fnv1a64(payload);
    if (stored != computed) {
        throw validation_error("E_TABLE_CHECKSUM", "table file checksum mismatch: " + path);
    }
    t.rows_.resize(t.header_.row_count);
    std::size_t at = kHeaderBytes;
    for (auto& r : t.rows_) {
        r.k1 = parse_f64(buf, at);
        r.k2 = parse_f64(buf, at + 8);
        r.k3 = parse_f64(buf, at + 16);
        r.k11 = parse_f64(buf, at + 24);
        r.k12 = parse_f64(buf, at + 32);
        r.k21 = parse_f64(buf, at + 40);
        r.k03 = parse_f64(buf, at + 48);
        at += kRowBytes;
    }
    t.checksum_ = computed;
    return t;
}

void CumulantTable::export_csv(const std::string& path) const {
    std::string out = "s,k1,k2,k3,k11,k12,k21,k03\n";
    for (std::size_t j = 0; j < rows_.size(); ++j) {
        double s = header_.s_min + static_cast<double>(j) * header_.step;
        const auto& r = rows_[j];
        out += format_double(s);
        for (double v : {r.k1, r.k2, r.k3, r.k11, r.k12, r.k21, r.k03}) {
            out += ',';
            out += format_double(v);
        }
        out += '\n';
    }
    atomic_write_file(path, out);
}

} // namespace cstat
