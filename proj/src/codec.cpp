#include "rmtlab/codec.hpp"

#include <charconv>
#include <cmath>
#include <cstdlib>

#include "rmtlab/error.hpp"

namespace rmtlab::codec {

namespace {

constexpr int kFirstDim = 3;
constexpr int kValueBase = kFirstDim + static_cast<int>(kMaxDim - kMinDim + 1);  // 18

// P1000 layout after kValueBase.
constexpr int kPlus = kValueBase;
constexpr int kMinus = kValueBase + 1;
constexpr int kMantZero = kValueBase + 2;
constexpr int kMantFirst = kValueBase + 3;                  // M100
constexpr int kExpFirst = kMantFirst + 900;                 // E-102
constexpr int kP1000Size = kExpFirst + (kP1000MaxExp - kP1000MinExp + 1);

// FP15 layout after kValueBase.
constexpr int kFpZero = kValueBase;
constexpr int kFpFirst = kValueBase + 1;
constexpr int kFpExpCount = kFp15MaxExp - kFp15MinExp + 1;  // 33
constexpr int kFp15Size = kFpFirst + 2 * 900 * kFpExpCount;

constexpr std::array<double, 23> kPow10 = {
    1e0,  1e1,  1e2,  1e3,  1e4,  1e5,  1e6,  1e7,  1e8,  1e9,  1e10, 1e11,
    1e12, 1e13, 1e14, 1e15, 1e16, 1e17, 1e18, 1e19, 1e20, 1e21, 1e22};

double pow10(int k) {
    return k < static_cast<int>(kPow10.size()) ? kPow10[k] : std::pow(10.0, k);
}

// v * 10^k, exact power table where available.
double scale10(double v, int k) { return k >= 0 ? v * pow10(k) : v / pow10(-k); }

std::optional<int> parse_int(std::string_view s) {
    int v = 0;
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc{} || ptr != s.data() + s.size()) return std::nullopt;
    // Canonical decimal only: no leading zeros, no "+", no "-0".
    if (std::to_string(v) != s) return std::nullopt;
    return v;
}

enum class Category { special, dim, sign, mantissa, exponent, fp15 };

Category category(Scheme s, int id) {
    if (id < kFirstDim) return Category::special;
    if (id < kValueBase) return Category::dim;
    if (s == Scheme::FP15) return Category::fp15;
    if (id <= kMinus) return Category::sign;
    if (id < kExpFirst) return Category::mantissa;
    return Category::exponent;
}

void check_id(Scheme s, int id, std::size_t position) {
    if (id < 0 || static_cast<std::size_t>(id) >= vocab_size(s))
        throw DecodeError(position, "token id " + std::to_string(id) + " outside vocabulary");
}

}  // namespace

std::string_view name(Scheme s) { return s == Scheme::P1000 ? "P1000" : "FP15"; }

Scheme parse_scheme(std::string_view text) {
    if (text == "P1000" || text == "p1000") return Scheme::P1000;
    if (text == "FP15" || text == "fp15") return Scheme::FP15;
    throw PreconditionError("unknown scheme '" + std::string(text) + "'");
}

std::string_view name(Task t) {
    switch (t) {
        case Task::eigenvalues: return "eigenvalues";
        case Task::diagonalization: return "diagonalization";
        case Task::inversion: return "inversion";
    }
    return "unknown";
}

Task parse_task(std::string_view text) {
    if (text == "eigenvalues") return Task::eigenvalues;
    if (text == "diagonalization" || text == "eigenvectors") return Task::diagonalization;
    if (text == "inversion") return Task::inversion;
    throw PreconditionError("unknown task '" + std::string(text) + "'");
}

std::size_t vocab_size(Scheme s) {
    return static_cast<std::size_t>(s == Scheme::P1000 ? kP1000Size : kFp15Size);
}

int dim_token(std::size_t n) {
    if (n < kMinDim || n > kMaxDim)
        throw EncodeRangeError("matrix dimension " + std::to_string(n) + " has no V token");
    return kFirstDim + static_cast<int>(n - kMinDim);
}

std::optional<std::size_t> dim_of_token(int id) {
    if (id < kFirstDim || id >= kValueBase) return std::nullopt;
    return static_cast<std::size_t>(id - kFirstDim) + kMinDim;
}

std::string surface(Scheme s, int id) {
    check_id(s, id, 0);
    switch (id) {
        case kPad: return "<pad>";
        case kBos: return "<bos>";
        case kEos: return "<eos>";
        default: break;
    }
    if (auto n = dim_of_token(id)) return "V" + std::to_string(*n);
    if (s == Scheme::P1000) {
        if (id == kPlus) return "+";
        if (id == kMinus) return "-";
        if (id == kMantZero) return "M0";
        if (id < kExpFirst) return "M" + std::to_string(100 + (id - kMantFirst));
        return "E" + std::to_string(kP1000MinExp + (id - kExpFirst));
    }
    if (id == kFpZero) return "F0E0";
    const int k = id - kFpFirst;
    const int e = kFp15MinExp + k % kFpExpCount;
    const int m = 100 + (k / kFpExpCount) % 900;
    const bool neg = k / (kFpExpCount * 900) == 1;
    return std::string("F") + (neg ? "-" : "+") + std::to_string(m) + "E" + std::to_string(e);
}

std::optional<int> token_id(Scheme s, std::string_view t) {
    if (t == "<pad>") return kPad;
    if (t == "<bos>") return kBos;
    if (t == "<eos>") return kEos;
    if (t.size() >= 2 && t[0] == 'V') {
        auto n = parse_int(t.substr(1));
        if (!n || *n < static_cast<int>(kMinDim) || *n > static_cast<int>(kMaxDim)) return std::nullopt;
        return dim_token(static_cast<std::size_t>(*n));
    }
    if (s == Scheme::P1000) {
        if (t == "+") return kPlus;
        if (t == "-") return kMinus;
        if (t.size() >= 2 && t[0] == 'M') {
            auto m = parse_int(t.substr(1));
            if (!m) return std::nullopt;
            if (*m == 0) return kMantZero;
            if (*m < 100 || *m > 999) return std::nullopt;
            return kMantFirst + (*m - 100);
        }
        if (t.size() >= 2 && t[0] == 'E') {
            auto e = parse_int(t.substr(1));
            if (!e || *e < kP1000MinExp || *e > kP1000MaxExp) return std::nullopt;
            return kExpFirst + (*e - kP1000MinExp);
        }
        return std::nullopt;
    }
    if (t == "F0E0") return kFpZero;
    if (t.size() < 6 || t[0] != 'F' || (t[1] != '+' && t[1] != '-')) return std::nullopt;
    const auto epos = t.find('E', 2);
    if (epos == std::string_view::npos) return std::nullopt;
    auto m = parse_int(t.substr(2, epos - 2));
    auto e = parse_int(t.substr(epos + 1));
    if (!m || !e || *m < 100 || *m > 999 || *e < kFp15MinExp || *e > kFp15MaxExp) return std::nullopt;
    const int sign = t[1] == '-' ? 1 : 0;
    return kFpFirst + (sign * 900 + (*m - 100)) * kFpExpCount + (*e - kFp15MinExp);
}

double Rounded::value() const {
    return sign * scale10(static_cast<double>(mantissa), exponent);
}

Rounded round3(double x) {
    if (!std::isfinite(x)) throw EncodeRangeError("cannot encode a non-finite value");
    const double ax = std::abs(x);
    // Far below either scheme's smallest exponent.
    if (ax < 1e-200) return {};
    int e = static_cast<int>(std::floor(std::log10(ax))) - 2;
    long m = 0;
    // log10 may be off by one near powers of ten; settle on the exponent that
    // puts the rounded mantissa in [100, 1000].
    for (int iter = 0; iter < 4; ++iter) {
        m = std::lround(scale10(ax, -e));
        if (m >= 1000 && m != 1000) {
            ++e;
        } else if (m < 100) {
            --e;
        } else {
            break;
        }
    }
    if (m == 1000) {
        m = 100;
        ++e;
    }
    return {x < 0.0 ? -1 : 1, static_cast<int>(m), e};
}

std::array<int, 3> encode_value_p1000(double x) {
    Rounded r = round3(x);
    if (r.mantissa != 0 && r.exponent > kP1000MaxExp)
        throw EncodeRangeError("value exceeds P1000 exponent range");
    if (r.mantissa == 0 || r.exponent < kP1000MinExp) return {kPlus, kMantZero, kExpFirst - kP1000MinExp};
    return {r.sign < 0 ? kMinus : kPlus, kMantFirst + (r.mantissa - 100),
            kExpFirst + (r.exponent - kP1000MinExp)};
}

double decode_value_p1000(std::span<const int> ids, std::size_t position) {
    if (ids.size() < 3) throw DecodeError(position + ids.size(), "truncated P1000 value");
    for (std::size_t k = 0; k < 3; ++k) check_id(Scheme::P1000, ids[k], position + k);
    if (category(Scheme::P1000, ids[0]) != Category::sign)
        throw DecodeError(position, "expected sign token");
    if (category(Scheme::P1000, ids[1]) != Category::mantissa)
        throw DecodeError(position + 1, "expected mantissa token");
    if (category(Scheme::P1000, ids[2]) != Category::exponent)
        throw DecodeError(position + 2, "expected exponent token");
    const int m = ids[1] == kMantZero ? 0 : 100 + (ids[1] - kMantFirst);
    const int e = kP1000MinExp + (ids[2] - kExpFirst);
    const double v = scale10(static_cast<double>(m), e);
    return ids[0] == kMinus ? -v : v;
}

int encode_value_fp15(double x) {
    Rounded r = round3(x);
    if (r.mantissa != 0 && r.exponent > kFp15MaxExp)
        throw EncodeRangeError("value exceeds FP15 exponent range");
    if (r.mantissa == 0 || r.exponent < kFp15MinExp) return kFpZero;
    const int sign = r.sign < 0 ? 1 : 0;
    return kFpFirst + (sign * 900 + (r.mantissa - 100)) * kFpExpCount + (r.exponent - kFp15MinExp);
}

double decode_value_fp15(int id, std::size_t position) {
    check_id(Scheme::FP15, id, position);
    if (category(Scheme::FP15, id) != Category::fp15)
        throw DecodeError(position, "expected FP15 value token");
    if (id == kFpZero) return 0.0;
    const int k = id - kFpFirst;
    const int e = kFp15MinExp + k % kFpExpCount;
    const int m = 100 + (k / kFpExpCount) % 900;
    const double v = scale10(static_cast<double>(m), e);
    return k / (kFpExpCount * 900) == 1 ? -v : v;
}

std::size_t tokens_per_value(Scheme s) { return s == Scheme::P1000 ? 3 : 1; }

std::string TokenSequence::to_string() const {
    std::string out;
    for (std::size_t i = 0; i < ids.size(); ++i) {
        if (i) out += ' ';
        out += surface(scheme, ids[i]);
    }
    return out;
}

TokenSequence parse_sequence(Scheme s, std::string_view text) {
    TokenSequence seq{s, {}};
    std::size_t start = 0;
    while (start <= text.size()) {
        const auto end = std::min(text.find(' ', start), text.size());
        const auto tok = text.substr(start, end - start);
        if (tok.empty()) {
            if (text.empty()) break;
            throw DecodeError(seq.ids.size(), "empty token");
        }
        auto id = token_id(s, tok);
        if (!id) throw DecodeError(seq.ids.size(), "unknown token '" + std::string(tok) + "'");
        seq.ids.push_back(*id);
        start = end + 1;
    }
    return seq;
}

void append_value(std::vector<int>& out, Scheme s, double x) {
    if (s == Scheme::P1000) {
        const auto t = encode_value_p1000(x);
        out.insert(out.end(), t.begin(), t.end());
    } else {
        out.push_back(encode_value_fp15(x));
    }
}

std::vector<double> read_values(Scheme s, std::span<const int> ids, std::size_t& pos,
                                std::size_t count) {
    std::vector<double> out;
    out.reserve(count);
    const std::size_t step = tokens_per_value(s);
    for (std::size_t k = 0; k < count; ++k) {
        if (pos + step > ids.size()) throw DecodeError(ids.size(), "sequence too short");
        if (s == Scheme::P1000) {
            out.push_back(decode_value_p1000(ids.subspan(pos, 3), pos));
        } else {
            out.push_back(decode_value_fp15(ids[pos], pos));
        }
        pos += step;
    }
    return out;
}

TokenSequence encode_input(const linalg::Matrix& m, Scheme s) {
    TokenSequence seq{s, {}};
    seq.ids.reserve(1 + tokens_per_value(s) * m.n() * m.n());
    seq.ids.push_back(dim_token(m.n()));
    for (double x : m.entries()) append_value(seq.ids, s, x);
    return seq;
}

linalg::Matrix decode_input(const TokenSequence& seq) {
    if (seq.ids.empty()) throw DecodeError(0, "empty input sequence");
    check_id(seq.scheme, seq.ids[0], 0);
    const auto n = dim_of_token(seq.ids[0]);
    if (!n) throw DecodeError(0, "expected dimension token");
    const std::size_t expected = 1 + tokens_per_value(seq.scheme) * *n * *n;
    if (seq.ids.size() != expected)
        throw DecodeError(std::min(seq.ids.size(), expected),
                          "expected " + std::to_string(expected) + " tokens, got " +
                              std::to_string(seq.ids.size()));
    std::size_t pos = 1;
    return linalg::Matrix(*n, read_values(seq.scheme, seq.ids, pos, *n * *n));
}

std::span<const double> Solution::spectrum() const {
    if (task == Task::inversion) throw PreconditionError("inversion solutions carry no spectrum");
    return std::span<const double>(values).first(n);
}

linalg::Matrix Solution::matrix() const {
    switch (task) {
        case Task::diagonalization:
            return linalg::Matrix(n, std::vector<double>(values.begin() + static_cast<long>(n), values.end()));
        case Task::inversion:
            return linalg::Matrix(n, values);
        case Task::eigenvalues:
            break;
    }
    throw PreconditionError("eigenvalue solutions carry no matrix");
}

std::size_t target_value_count(Task task, std::size_t n) {
    switch (task) {
        case Task::eigenvalues: return n;
        case Task::diagonalization: return n + n * n;
        case Task::inversion: return n * n;
    }
    return 0;
}

std::size_t target_token_count(Task task, std::size_t n, Scheme s) {
    return target_value_count(task, n) * tokens_per_value(s);
}

Solution solve(Task task, const linalg::Matrix& m) {
    Solution sol{task, m.n(), {}};
    if (task == Task::inversion) {
        const auto inv = linalg::invert(m);
        sol.values.assign(inv.entries().begin(), inv.entries().end());
        return sol;
    }
    const auto eig = linalg::eig_sym(linalg::SymMatrix::checked(m));
    sol.values.assign(eig.spectrum.values().begin(), eig.spectrum.values().end());
    if (task == Task::diagonalization)
        sol.values.insert(sol.values.end(), eig.vectors.entries().begin(), eig.vectors.entries().end());
    return sol;
}

TokenSequence encode_target(const Solution& sol, Scheme s) {
    if (sol.values.size() != target_value_count(sol.task, sol.n))
        throw PreconditionError("solution has the wrong number of values");
    TokenSequence seq{s, {}};
    seq.ids.reserve(sol.values.size() * tokens_per_value(s));
    for (double x : sol.values) append_value(seq.ids, s, x);
    return seq;
}

Solution decode_target(Task task, std::span<const int> ids, std::size_t n, Scheme s) {
    const std::size_t expected = target_token_count(task, n, s);
    if (ids.size() != expected)
        throw DecodeError(std::min(ids.size(), expected),
                          "expected " + std::to_string(expected) + " tokens, got " +
                              std::to_string(ids.size()));
    std::size_t pos = 0;
    return {task, n, read_values(s, ids, pos, target_value_count(task, n))};
}

}  // namespace rmtlab::codec
