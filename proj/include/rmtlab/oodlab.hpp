#pragma once

// Experiment orchestration: train one model per training ensemble, score it on
// held-out sets from every test ensemble, and emit the resulting accuracy
// grids, learning curves and condition-number tables.

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "rmtlab/codec.hpp"
#include "rmtlab/datagen.hpp"
#include "rmtlab/ensembles.hpp"
#include "rmtlab/evalkit.hpp"
#include "rmtlab/nanoformer.hpp"

namespace rmtlab::oodlab {

// Fills vocabulary sizes and maximum lengths for a task.
nanoformer::ModelConfig model_config_for(nanoformer::ModelConfig base, codec::Task task, std::size_t n,
                                         codec::Scheme input_scheme, codec::Scheme target_scheme);

nanoformer::Example to_example(const datagen::DatasetRecord& rec);

// Held-out problems: exact input matrices plus their encoded examples.
struct HeldOutSet {
    datagen::DatasetSpec spec;
    std::vector<linalg::Matrix> inputs;
    std::vector<nanoformer::Example> examples;
};

HeldOutSet make_held_out(const datagen::DatasetSpec& spec, int workers = 1);

struct EvalResult {
    std::vector<evalkit::EvalRecord> records;
    double accuracy = 0.0;  // fraction in [0, 1]
};

EvalResult evaluate_model(const nanoformer::Model& model, const HeldOutSet& held_out,
                          const evalkit::ToleranceConfig& tol, int workers = 1);

struct LogRow {
    std::size_t step = 0;
    double lr = 0.0;
    double loss = 0.0;
    std::optional<double> eval_accuracy;
};

struct TrainResult {
    std::size_t steps = 0;
    std::size_t samples = 0;
    double last_loss = 0.0;
    bool diverged = false;
    std::string error;
    std::vector<LogRow> log;
};

// Called every cfg.eval_every steps with (step, samples seen); the returned
// accuracy is logged. Returning true from `stop` ends training early.
struct TrainHooks {
    std::function<double(std::size_t step, std::size_t samples)> evaluate;
    std::function<bool(std::size_t step, std::size_t samples, double accuracy)> stop;
    std::size_t log_every = 100;
};

// Streams example_for_index(train_spec, i) for i = 0, 1, 2, ... in order;
// train_spec.count is ignored. Divergence is reported, not thrown.
TrainResult train_streaming(nanoformer::Model& model, const datagen::DatasetSpec& train_spec,
                            const nanoformer::TrainConfig& cfg, const TrainHooks& hooks = {},
                            int workers = 1);

// Same loop over a fixed list of examples, cycling in file order.
TrainResult train_on_examples(nanoformer::Model& model, const std::vector<nanoformer::Example>& data,
                              const nanoformer::TrainConfig& cfg, const TrainHooks& hooks = {});

void write_log_csv(std::ostream& out, const std::vector<LogRow>& log);

struct ExperimentBase {
    codec::Task task = codec::Task::eigenvalues;
    std::size_t n = 2;
    codec::Scheme input_scheme = codec::Scheme::P1000;
    codec::Scheme target_scheme = codec::Scheme::P1000;
    double sigma = ensembles::kDefaultSigma;
    std::optional<double> spectrum_scale;
    nanoformer::ModelConfig model;
    nanoformer::TrainConfig train;
    std::size_t test_count = 500;
    evalkit::ToleranceConfig tol;
    std::uint64_t seed = 0;
};

struct GridSpec : ExperimentBase {
    std::vector<ensembles::Kind> train_kinds;
    std::vector<ensembles::Kind> test_kinds;
    std::size_t samples_per_cell = 0;  // training budget per row, in examples

    void validate() const;
};

struct GridReport {
    std::vector<ensembles::Kind> train_kinds;
    std::vector<ensembles::Kind> test_kinds;
    // Percentages in [0, 100]; nullopt marks a row whose training failed.
    std::vector<std::vector<std::optional<double>>> accuracy;
    std::vector<std::vector<std::optional<evalkit::VerifierReport>>> cells;
    std::vector<std::string> row_errors;  // empty string for healthy rows
    std::vector<double> final_loss;
    double seconds = 0.0;  // wall clock, excluded from comparisons
};

// Seeds for a row's training stream and a column's test set, derived from the
// grid seed and the ensemble kind only, so rows and columns stay independent.
std::uint64_t train_seed(std::uint64_t grid_seed, ensembles::Kind kind);
std::uint64_t test_seed(std::uint64_t grid_seed, ensembles::Kind kind);

datagen::DatasetSpec train_spec_for(const ExperimentBase& e, ensembles::Kind kind);
datagen::DatasetSpec test_spec_for(const ExperimentBase& e, ensembles::Kind kind);

GridReport run_grid(const GridSpec& spec, int workers = 1);

struct CurveSpec : ExperimentBase {
    ensembles::Kind train_kind = ensembles::Kind::semicircle;
    ensembles::Kind eval_kind = ensembles::Kind::semicircle;
    double target_accuracy = 0.99;  // fraction in [0, 1]

    void validate() const;
};

struct CurveResult {
    std::optional<std::size_t> samples_to_target;
    double final_accuracy = 0.0;
    std::size_t budget_samples = 0;
    std::vector<std::pair<std::size_t, double>> points;  // (samples, accuracy)
};

CurveResult learning_curve(const CurveSpec& spec, int workers = 1);

struct ConditionTable {
    std::size_t n = 5;
    std::vector<ensembles::Kind> kinds;
    std::vector<ensembles::QuantileReport> rows;
};

ConditionTable condition_table(const std::vector<ensembles::Kind>& kinds, std::size_t n,
                               std::size_t count, std::uint64_t seed, int workers = 1);

enum class TableFormat { csv, markdown };

std::string emit_table(const GridReport& report, TableFormat format);
std::string emit_table(const ConditionTable& table, TableFormat format);

// Parses the markdown emitted above back into row-major cells ("—" -> nullopt).
std::vector<std::vector<std::optional<double>>> parse_markdown_grid(const std::string& text);

GridSpec grid_spec_from_json(const nlohmann::json& j);
CurveSpec curve_spec_from_json(const nlohmann::json& j);
nlohmann::json to_json(const GridSpec& spec);
nlohmann::json to_json(const CurveSpec& spec);
// Report plus the exact spec and derived seeds, enough to rerun the grid.
nlohmann::json run_manifest(const GridSpec& spec, const GridReport& report);
// Deterministic content of a report (no timings), for equality checks.
nlohmann::json report_content(const GridReport& report);

}  // namespace rmtlab::oodlab
