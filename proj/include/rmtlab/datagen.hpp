#pragma once

// On-disk datasets.
//
// A dataset directory holds two files:
//   data.txt       one record per line: "<input surfaces> | <target surfaces>\n"
//   manifest.json  {version, task, ensemble{kind,n,sigma,seed,spectrum_scale},
//                   input_scheme, target_scheme, count, sha256, retries}
//
// Records are pure functions of (spec, index); a singular or unencodable draw
// moves to the next retry stream of the same index.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <string>

#include <nlohmann/json.hpp>

#include "rmtlab/codec.hpp"
#include "rmtlab/ensembles.hpp"

namespace rmtlab::datagen {

inline constexpr int kManifestVersion = 1;
inline constexpr std::uint32_t kMaxRetries = 100;

struct DatasetSpec {
    codec::Task task = codec::Task::eigenvalues;
    ensembles::EnsembleConfig ensemble;  // ensemble.seed is the dataset seed
    codec::Scheme input_scheme = codec::Scheme::P1000;
    codec::Scheme target_scheme = codec::Scheme::P1000;
    std::size_t count = 0;

    // Eigen tasks need a symmetric kind; inversion accepts any kind.
    void validate() const;
};

struct DatasetRecord {
    std::uint64_t index = 0;
    codec::TokenSequence input;
    codec::TokenSequence target;
    double cond_m = 0.0;
    std::optional<double> min_eig;  // symmetric inputs only
    std::uint32_t retries = 0;

    std::string to_line() const;  // without the trailing newline
};

DatasetRecord example_for_index(const DatasetSpec& spec, std::uint64_t index);

// Lines for indices [begin, end), each terminated by '\n'.
std::string format_records(const DatasetSpec& spec, std::uint64_t begin, std::uint64_t end,
                           int workers = 1, std::uint64_t* retries = nullptr);

struct Manifest {
    int version = kManifestVersion;
    DatasetSpec spec;
    std::string sha256;
    std::uint64_t retries = 0;
};

nlohmann::json to_json(const DatasetSpec& spec);
DatasetSpec spec_from_json(const nlohmann::json& j);
nlohmann::json to_json(const Manifest& m);
Manifest manifest_from_json(const nlohmann::json& j);

std::string sha256_hex(std::string_view bytes);
std::string sha256_file(const std::filesystem::path& path);

inline std::filesystem::path data_path(const std::filesystem::path& dir) { return dir / "data.txt"; }
inline std::filesystem::path manifest_path(const std::filesystem::path& dir) {
    return dir / "manifest.json";
}

Manifest build_dataset(const DatasetSpec& spec, const std::filesystem::path& dir, int workers = 1);

// Writes records [begin, end) to `path` (a shard). Concatenating shards that
// tile [0, count) reproduces data.txt of a full build byte for byte.
std::uint64_t write_shard(const DatasetSpec& spec, std::uint64_t begin, std::uint64_t end,
                          const std::filesystem::path& path, int workers = 1);

// Writes manifest.json for an existing data.txt assembled from shards.
Manifest finalize_dataset(const DatasetSpec& spec, const std::filesystem::path& dir,
                          std::uint64_t retries);

Manifest read_manifest(const std::filesystem::path& dir);

DatasetRecord parse_record(const DatasetSpec& spec, std::string_view line, std::uint64_t index);

// Sequential reader; validates every surface against the manifest's schemes and
// the final line count against the manifest. Errors carry 1-based line numbers.
class DatasetReader {
public:
    explicit DatasetReader(const std::filesystem::path& dir);

    const Manifest& manifest() const noexcept { return manifest_; }
    std::optional<DatasetRecord> next();

private:
    Manifest manifest_;
    std::ifstream in_;
    std::uint64_t line_ = 0;
    bool done_ = false;
};

std::vector<DatasetRecord> read_dataset(const std::filesystem::path& dir);

}  // namespace rmtlab::datagen
