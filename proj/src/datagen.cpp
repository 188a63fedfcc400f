#include "rmtlab/datagen.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <sstream>
#include <vector>

#include <omp.h>
#include <openssl/evp.h>

#include "rmtlab/error.hpp"

namespace rmtlab::datagen {

namespace {

using codec::Scheme;
using codec::Task;

std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot open " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_file(const std::filesystem::path& path, std::string_view bytes) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot write " + path.string());
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw Error("write failed for " + path.string());
}

}  // namespace

void DatasetSpec::validate() const {
    ensemble.validate();
    if (task != Task::inversion && !ensembles::is_symmetric_kind(ensemble.kind))
        throw PreconditionError(std::string(codec::name(task)) + " needs a symmetric ensemble, got " +
                                std::string(ensembles::name(ensemble.kind)));
    if (ensemble.n > codec::kMaxDim) throw PreconditionError("matrix dimension too large");
}

std::string DatasetRecord::to_line() const {
    return input.to_string() + " | " + target.to_string();
}

DatasetRecord example_for_index(const DatasetSpec& spec, std::uint64_t index) {
    spec.validate();
    for (std::uint32_t attempt = 0; attempt <= kMaxRetries; ++attempt) {
        try {
            const linalg::Matrix m = ensembles::sample_matrix(spec.ensemble, index, attempt);
            const codec::Solution sol = codec::solve(spec.task, m);
            DatasetRecord rec;
            rec.index = index;
            rec.input = codec::encode_input(m, spec.input_scheme);
            rec.target = codec::encode_target(sol, spec.target_scheme);
            rec.cond_m = linalg::cond(m);
            if (m.is_symmetric()) {
                rec.min_eig = spec.task == Task::inversion
                                  ? linalg::eig_sym(linalg::SymMatrix::checked(m)).spectrum.values().back()
                                  : sol.values[spec.ensemble.n - 1];
            }
            rec.retries = attempt;
            return rec;
        } catch (const SingularMatrixError&) {
        } catch (const EncodeRangeError&) {
        } catch (const SolverError&) {
        }
    }
    throw GenerationError(index, "no valid draw after " + std::to_string(kMaxRetries) + " retries");
}

std::string format_records(const DatasetSpec& spec, std::uint64_t begin, std::uint64_t end,
                           int workers, std::uint64_t* retries) {
    spec.validate();
    if (end < begin) throw PreconditionError("shard end precedes begin");
    const auto count = static_cast<std::int64_t>(end - begin);
    std::vector<std::string> lines(static_cast<std::size_t>(count));
    std::vector<std::uint32_t> tries(static_cast<std::size_t>(count));
    std::optional<GenerationError> failure;

#pragma omp parallel for num_threads(std::max(workers, 1)) schedule(dynamic, 64)
    for (std::int64_t k = 0; k < count; ++k) {
        try {
            auto rec = example_for_index(spec, begin + static_cast<std::uint64_t>(k));
            lines[static_cast<std::size_t>(k)] = rec.to_line();
            tries[static_cast<std::size_t>(k)] = rec.retries;
        } catch (const GenerationError& e) {
#pragma omp critical(rmtlab_generation_failure)
            if (!failure || e.index() < failure->index()) failure = e;
        }
    }
    if (failure) throw *failure;

    std::string out;
    std::size_t total = 0;
    for (const auto& l : lines) total += l.size() + 1;
    out.reserve(total);
    for (const auto& l : lines) {
        out += l;
        out += '\n';
    }
    if (retries) {
        std::uint64_t r = 0;
        for (auto t : tries) r += t;
        *retries = r;
    }
    return out;
}

nlohmann::json to_json(const DatasetSpec& spec) {
    nlohmann::json ens{{"kind", ensembles::name(spec.ensemble.kind)},
                       {"n", spec.ensemble.n},
                       {"sigma", spec.ensemble.sigma},
                       {"seed", spec.ensemble.seed},
                       {"spectrum_scale", nullptr}};
    if (spec.ensemble.spectrum_scale) ens["spectrum_scale"] = *spec.ensemble.spectrum_scale;
    return {{"task", codec::name(spec.task)},
            {"ensemble", ens},
            {"input_scheme", codec::name(spec.input_scheme)},
            {"target_scheme", codec::name(spec.target_scheme)},
            {"count", spec.count}};
}

DatasetSpec spec_from_json(const nlohmann::json& j) {
    try {
        DatasetSpec s;
        s.task = codec::parse_task(j.at("task").get<std::string>());
        const auto& e = j.at("ensemble");
        s.ensemble.kind = ensembles::parse_kind(e.at("kind").get<std::string>());
        s.ensemble.n = e.at("n").get<std::size_t>();
        s.ensemble.sigma = e.value("sigma", ensembles::kDefaultSigma);
        s.ensemble.seed = e.at("seed").get<std::uint64_t>();
        if (e.contains("spectrum_scale") && !e.at("spectrum_scale").is_null())
            s.ensemble.spectrum_scale = e.at("spectrum_scale").get<double>();
        s.input_scheme = codec::parse_scheme(j.at("input_scheme").get<std::string>());
        s.target_scheme = codec::parse_scheme(j.at("target_scheme").get<std::string>());
        s.count = j.at("count").get<std::size_t>();
        return s;
    } catch (const nlohmann::json::exception& ex) {
        throw DatasetError(0, std::string("malformed dataset spec: ") + ex.what());
    }
}

nlohmann::json to_json(const Manifest& m) {
    nlohmann::json j = to_json(m.spec);
    j["version"] = m.version;
    j["sha256"] = m.sha256;
    j["retries"] = m.retries;
    return j;
}

Manifest manifest_from_json(const nlohmann::json& j) {
    Manifest m;
    m.spec = spec_from_json(j);
    try {
        m.version = j.at("version").get<int>();
        m.sha256 = j.at("sha256").get<std::string>();
        m.retries = j.value("retries", std::uint64_t{0});
    } catch (const nlohmann::json::exception& ex) {
        throw DatasetError(0, std::string("malformed manifest: ") + ex.what());
    }
    if (m.version != kManifestVersion)
        throw DatasetError(0, "unsupported manifest version " + std::to_string(m.version));
    return m;
}

std::string sha256_hex(std::string_view bytes) {
    unsigned char digest[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    if (EVP_Digest(bytes.data(), bytes.size(), digest, &len, EVP_sha256(), nullptr) != 1)
        throw Error("sha256 failed");
    std::ostringstream ss;
    for (unsigned int i = 0; i < len; ++i)
        ss << std::hex << std::setw(2) << std::setfill('0') << static_cast<int>(digest[i]);
    return ss.str();
}

std::string sha256_file(const std::filesystem::path& path) { return sha256_hex(read_file(path)); }

std::uint64_t write_shard(const DatasetSpec& spec, std::uint64_t begin, std::uint64_t end,
                          const std::filesystem::path& path, int workers) {
    std::uint64_t retries = 0;
    write_file(path, format_records(spec, begin, end, workers, &retries));
    return retries;
}

Manifest finalize_dataset(const DatasetSpec& spec, const std::filesystem::path& dir,
                          std::uint64_t retries) {
    Manifest m;
    m.spec = spec;
    m.sha256 = sha256_file(data_path(dir));
    m.retries = retries;
    write_file(manifest_path(dir), to_json(m).dump(2) + "\n");
    return m;
}

Manifest build_dataset(const DatasetSpec& spec, const std::filesystem::path& dir, int workers) {
    spec.validate();
    std::filesystem::create_directories(dir);
    const std::uint64_t retries = write_shard(spec, 0, spec.count, data_path(dir), workers);
    return finalize_dataset(spec, dir, retries);
}

Manifest read_manifest(const std::filesystem::path& dir) {
    const auto path = manifest_path(dir);
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(read_file(path));
    } catch (const nlohmann::json::parse_error& ex) {
        throw DatasetError(0, path.string() + ": " + ex.what());
    }
    return manifest_from_json(j);
}

DatasetRecord parse_record(const DatasetSpec& spec, std::string_view line, std::uint64_t index) {
    const auto sep = line.find(" | ");
    if (sep == std::string_view::npos) throw DatasetError(index + 1, "missing ' | ' separator");
    DatasetRecord rec;
    rec.index = index;
    try {
        rec.input = codec::parse_sequence(spec.input_scheme, line.substr(0, sep));
        rec.target = codec::parse_sequence(spec.target_scheme, line.substr(sep + 3));
        const linalg::Matrix m = codec::decode_input(rec.input);
        if (m.n() != spec.ensemble.n) throw DatasetError(index + 1, "input dimension disagrees with manifest");
        codec::decode_target(spec.task, rec.target.ids, m.n(), spec.target_scheme);
        rec.cond_m = linalg::cond(m);
        if (m.is_symmetric())
            rec.min_eig = linalg::eig_sym(linalg::SymMatrix::checked(m)).spectrum.values().back();
    } catch (const DecodeError& e) {
        throw DatasetError(index + 1, e.what());
    }
    return rec;
}

DatasetReader::DatasetReader(const std::filesystem::path& dir)
    : manifest_(read_manifest(dir)), in_(data_path(dir), std::ios::binary) {
    if (!in_) throw DatasetError(0, "cannot open " + data_path(dir).string());
}

std::optional<DatasetRecord> DatasetReader::next() {
    if (done_) return std::nullopt;
    std::string line;
    if (!std::getline(in_, line)) {
        done_ = true;
        if (line_ != manifest_.spec.count)
            throw DatasetError(0, "manifest promises " + std::to_string(manifest_.spec.count) +
                                      " records, file has " + std::to_string(line_));
        return std::nullopt;
    }
    ++line_;
    if (in_.eof()) {
        done_ = true;
        throw DatasetError(line_, "truncated record (missing newline terminator)");
    }
    return parse_record(manifest_.spec, line, line_ - 1);
}

std::vector<DatasetRecord> read_dataset(const std::filesystem::path& dir) {
    DatasetReader reader(dir);
    std::vector<DatasetRecord> out;
    while (auto rec = reader.next()) out.push_back(std::move(*rec));
    return out;
}

}  // namespace rmtlab::datagen
