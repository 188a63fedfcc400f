#pragma once

// Token encodings of reals, matrices and task solutions.
//
// P1000: three tokens per value, sign (`+`/`-`), mantissa (`M0`, `M100`..`M999`)
//        and exponent (`E-102`..`E100`).
// FP15:  one token per value, `F{sign}{mantissa}E{exponent}` with mantissa in
//        [100, 999] and exponent in [-16, 16], plus `F0E0` for zero.
//
// Values are rounded to three significant digits, half away from zero. Both
// schemes share the id layout: <pad>, <bos>, <eos>, V2..V16, then value tokens.

#include <array>
#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "rmtlab/linalg.hpp"

namespace rmtlab::codec {

enum class Scheme { P1000, FP15 };

std::string_view name(Scheme s);
Scheme parse_scheme(std::string_view text);

enum class Task { eigenvalues, diagonalization, inversion };

std::string_view name(Task t);
Task parse_task(std::string_view text);

inline constexpr int kPad = 0;
inline constexpr int kBos = 1;
inline constexpr int kEos = 2;
inline constexpr std::size_t kMinDim = 2;
inline constexpr std::size_t kMaxDim = 16;

inline constexpr int kP1000MinExp = -102;
inline constexpr int kP1000MaxExp = 100;
inline constexpr int kFp15MinExp = -16;
inline constexpr int kFp15MaxExp = 16;

std::size_t vocab_size(Scheme s);
// Throws DecodeError(0, ...) for ids outside the vocabulary.
std::string surface(Scheme s, int id);
std::optional<int> token_id(Scheme s, std::string_view surface);

int dim_token(std::size_t n);
// nullopt unless `id` is a V{n} token.
std::optional<std::size_t> dim_of_token(int id);

// x = sign * mantissa * 10^exponent with mantissa in [100, 999], or the zero
// triple (+1, 0, 0).
struct Rounded {
    int sign = 1;
    int mantissa = 0;
    int exponent = 0;

    double value() const;
};

Rounded round3(double x);

std::array<int, 3> encode_value_p1000(double x);
double decode_value_p1000(std::span<const int> ids, std::size_t position = 0);
int encode_value_fp15(double x);
double decode_value_fp15(int id, std::size_t position = 0);

std::size_t tokens_per_value(Scheme s);

struct TokenSequence {
    Scheme scheme = Scheme::P1000;
    std::vector<int> ids;

    std::size_t size() const noexcept { return ids.size(); }
    // Space-separated surface forms.
    std::string to_string() const;
    friend bool operator==(const TokenSequence&, const TokenSequence&) = default;
};

// Splits on single spaces; unknown surfaces raise DecodeError with their position.
TokenSequence parse_sequence(Scheme s, std::string_view text);

void append_value(std::vector<int>& out, Scheme s, double x);
// Decodes `count` values starting at `pos`; advances `pos`.
std::vector<double> read_values(Scheme s, std::span<const int> ids, std::size_t& pos,
                                std::size_t count);

// `V{n}` followed by the n*n coefficients row-major.
TokenSequence encode_input(const linalg::Matrix& m, Scheme s);
linalg::Matrix decode_input(const TokenSequence& seq);

// Raw values of a task solution:
//   eigenvalues      n values
//   diagonalization  n values then H row-major
//   inversion        n*n values row-major
// Decoded model output may be unsorted, so values stay a plain vector here.
struct Solution {
    Task task = Task::eigenvalues;
    std::size_t n = 0;
    std::vector<double> values;

    std::span<const double> spectrum() const;      // eigenvalues / diagonalization
    linalg::Matrix matrix() const;                 // H or the inverse
};

std::size_t target_value_count(Task task, std::size_t n);
std::size_t target_token_count(Task task, std::size_t n, Scheme s);

Solution solve(Task task, const linalg::Matrix& m);

TokenSequence encode_target(const Solution& sol, Scheme s);
// Rejects wrong token counts or category order with a positioned DecodeError.
Solution decode_target(Task task, std::span<const int> ids, std::size_t n, Scheme s);

}  // namespace rmtlab::codec
