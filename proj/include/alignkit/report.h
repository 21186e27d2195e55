#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "alignkit/data.h"
#include "alignkit/gen.h"
#include "alignkit/metrics.h"
#include "alignkit/model.h"
#include "alignkit/scorer.h"

namespace alignkit {

struct MetricSet {
    std::string tag;
    double hmr = 0.0;
    double hpr = 0.0;
    double cas = 0.0;
    double avg_harm = 0.0;
    double avg_help = 0.0;
    ScoreSummary harm_summary;
    ScoreSummary help_summary;
    int64_t n_total = 0;
    int64_t n_harmless = 0;
    int64_t n_helpful = 0;
};

/// Relative improvement over the base model, full precision (rendered to
/// 2 decimals only in tables).
struct Improvement {
    std::string tag;
    double d_hmr = 0.0;
    double d_hpr = 0.0;
    double d_cas = 0.0;
};

/// One generation+scoring event; the complete set allows every aggregate
/// in the report to be recomputed independently.
struct AuditRow {
    std::string model;
    std::string category;
    int64_t source_index = 0;
    std::string prompt;
    std::string response;
    std::string stop_reason;
    double score = 0.0;
    std::string label;
};

struct EvalMeta {
    uint64_t seed = 0;
    EvalThresholds thresholds;
    std::string scorer;
    std::vector<std::string> keywords;
    int64_t n_harm_prompts = 0;
    int64_t n_help_prompts = 0;
    int64_t max_new_tokens = 0;
};

struct AlignmentReport {
    EvalMeta meta;
    std::vector<MetricSet> models;
    std::vector<Improvement> improvements;  // present only when a model is tagged "base"
    std::string audit_path;
    std::vector<AuditRow> rows;
};

struct TaggedModel {
    std::string tag;
    const TransformerModel* model = nullptr;
};

/// Aggregates audit rows into per-model metric sets (model order = first
/// appearance in rows). Shared by the live evaluation and audit replay so
/// the two can never disagree.
std::vector<MetricSet> aggregate_rows(const std::vector<AuditRow>& rows,
                                      const EvalThresholds& thresholds);

/// Improvements of every non-base model over the one tagged "base"; empty
/// when no base model is present.
std::vector<Improvement> build_improvements(const std::vector<MetricSet>& models);

/// Evaluates every model on the same two prompt lists: greedy generation,
/// scoring, classification, aggregation. The audit file at audit_path is
/// written incrementally (meta line first, then one line per row); if the
/// scorer fails, a final line marked partial is appended and the ScorerError
/// propagates. meta.seed and meta.keywords are taken from the argument;
/// the remaining meta fields are filled in here.
///
/// Throws ContractError on empty model/prompt lists, duplicate or empty
/// tags, or prompts whose category does not match their list.
AlignmentReport run_alignment_eval(const std::vector<TaggedModel>& models,
                                   const std::vector<EvalPrompt>& harm_prompts,
                                   const std::vector<EvalPrompt>& help_prompts, Scorer& scorer,
                                   const EvalThresholds& thresholds,
                                   const GenerationConfig& gen_config,
                                   const std::string& audit_path, const EvalMeta& meta = {});

/// Rebuilds a full report from an audit file (the `report` subcommand).
/// Throws FormatError on malformed audit lines and StateError when the file
/// is marked partial.
AlignmentReport load_report_from_audit(const std::string& audit_path);

/// Writes report.json (full precision), report.csv (one row per model and
/// metric, 2-decimal rendering), metrics.svg (grouped bars), and scores.svg
/// (box plots per category) into out_dir. Throws IoError when out_dir
/// cannot be created or written.
void emit_report(const AlignmentReport& report, const std::string& out_dir);

}  // namespace alignkit
