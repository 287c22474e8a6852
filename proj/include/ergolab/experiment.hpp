#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "ergolab/core.hpp"

namespace ergolab {

// One file an experiment stage produced. Paths are relative to the run's
// output directory; checksums are fnv1a-64 over the file bytes. formula names
// the bound identifier when the file carries a certified-bound column.
struct StageRecord {
    std::string stage;
    std::string path;
    std::string checksum;
    std::string formula;
};

// Replayable record of one experiment run. Timestamps live only here, never
// in the data files, so re-running the same config and seed reproduces every
// CSV byte for byte.
struct RunManifest {
    std::string experiment;
    std::string config_text;  // snapshot of the effective config, overrides applied
    std::uint64_t seed = 0;
    std::string version;
    std::string output_dir;
    std::string started_at;   // UTC, second resolution
    std::string finished_at;
    std::vector<StageRecord> outputs;
    std::string error;        // empty on success; partial outputs stay listed

    bool ok() const { return error.empty(); }
    std::string to_json() const;
};

RunManifest manifest_from_json(const std::string& text);

// fnv1a-64 of the bytes, as 16 hex digits.
std::string fnv1a_hex(const std::string& bytes);

// Experiments, selected by the config's "experiment" key:
//   zero-exponent-path  entropy and fiber-exponent sweep along a simplex
//                       segment, per tower level
//   cauchy-table        certified level edit-distance bounds vs measured
//                       shared-letter coupling values
//   furstenberg         growth-rate table for the three shipped families
//   lln                 one uniform frequency-control constant checked
//                       against sampled masses for many vectors
//
// Config schema (JSON object): "experiment" string, "seed" nonnegative
// integer, "output_dir" string, optional "params" object with
// experiment-specific keys (unknown keys are rejected). The CLI can override
// seed and output_dir; everything else comes from the file.
RunManifest run_experiment(const std::string& config_path,
                           std::optional<std::uint64_t> seed_override = std::nullopt,
                           std::optional<std::string> outdir_override = std::nullopt);

// Same, from config text already in memory (the path form reads the file and
// delegates here).
RunManifest run_experiment_text(const std::string& config_text,
                                std::optional<std::uint64_t> seed_override = std::nullopt,
                                std::optional<std::string> outdir_override = std::nullopt);

// Human-readable summary of a completed run: one table per experiment with
// certified-vs-measured columns and an OK flag per row. Throws invalid_input
// when the manifest lists no outputs or a listed file is missing or stale.
std::string emit_report(const RunManifest& manifest);

}  // namespace ergolab
