#include "alignkit/report.h"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <set>

#include "alignkit/tokenizer.h"
#include "json.hpp"

namespace alignkit {

namespace {

// Model output is raw bytes and need not be valid UTF-8, but JSON strings
// must be. Audit text fields are transcoded byte-for-byte into code points
// U+0000..U+00FF on write and back on read, so replay sees the exact bytes.
std::string bytes_to_utf8(const std::string& bytes) {
    std::string out;
    out.reserve(bytes.size());
    for (unsigned char c : bytes) {
        if (c < 0x80) {
            out.push_back(static_cast<char>(c));
        } else {
            out.push_back(static_cast<char>(0xC0 | (c >> 6)));
            out.push_back(static_cast<char>(0x80 | (c & 0x3F)));
        }
    }
    return out;
}

std::string utf8_to_bytes(const std::string& utf8) {
    std::string out;
    out.reserve(utf8.size());
    for (size_t i = 0; i < utf8.size(); ++i) {
        const unsigned char c = static_cast<unsigned char>(utf8[i]);
        if ((c == 0xC2 || c == 0xC3) && i + 1 < utf8.size()) {
            const unsigned char next = static_cast<unsigned char>(utf8[i + 1]);
            if ((next & 0xC0) == 0x80) {
                out.push_back(static_cast<char>(((c & 0x03) << 6) | (next & 0x3F)));
                ++i;
                continue;
            }
        }
        out.push_back(static_cast<char>(c));
    }
    return out;
}

nlohmann::json summary_to_json(const ScoreSummary& s) {
    nlohmann::json j;
    j["min"] = s.min;
    j["q1"] = s.q1;
    j["median"] = s.median;
    j["q3"] = s.q3;
    j["max"] = s.max;
    j["mean"] = s.mean;
    return j;
}

nlohmann::json meta_to_json(const EvalMeta& meta) {
    nlohmann::json j;
    j["seed"] = meta.seed;
    j["thresholds"] = {{"harmful_below", meta.thresholds.harmful_below},
                       {"helpful_above", meta.thresholds.helpful_above}};
    j["scorer"] = meta.scorer;
    j["keywords"] = meta.keywords;
    j["prompt_counts"] = {{"harmless", meta.n_harm_prompts}, {"helpful", meta.n_help_prompts}};
    j["max_new_tokens"] = meta.max_new_tokens;
    return j;
}

const nlohmann::json& require_field(const nlohmann::json& obj, const char* key,
                                    const std::string& where) {
    auto it = obj.find(key);
    if (it == obj.end()) {
        throw FormatError("audit " + where + " is missing field \"" + key + "\"");
    }
    return *it;
}

EvalMeta meta_from_json(const nlohmann::json& j) {
    EvalMeta meta;
    meta.seed = require_field(j, "seed", "meta").get<uint64_t>();
    const nlohmann::json& thresholds = require_field(j, "thresholds", "meta");
    meta.thresholds.harmful_below = require_field(thresholds, "harmful_below", "meta").get<double>();
    meta.thresholds.helpful_above = require_field(thresholds, "helpful_above", "meta").get<double>();
    meta.scorer = require_field(j, "scorer", "meta").get<std::string>();
    meta.keywords = require_field(j, "keywords", "meta").get<std::vector<std::string>>();
    const nlohmann::json& counts = require_field(j, "prompt_counts", "meta");
    meta.n_harm_prompts = require_field(counts, "harmless", "meta").get<int64_t>();
    meta.n_help_prompts = require_field(counts, "helpful", "meta").get<int64_t>();
    meta.max_new_tokens = require_field(j, "max_new_tokens", "meta").get<int64_t>();
    return meta;
}

}  // namespace

std::vector<MetricSet> aggregate_rows(const std::vector<AuditRow>& rows,
                                      const EvalThresholds& thresholds) {
    if (rows.empty()) {
        throw ContractError("cannot aggregate an empty audit row list");
    }
    std::vector<std::string> order;
    for (const AuditRow& row : rows) {
        if (std::find(order.begin(), order.end(), row.model) == order.end()) {
            order.push_back(row.model);
        }
    }

    std::vector<MetricSet> sets;
    for (const std::string& tag : order) {
        std::vector<double> harm_scores;
        std::vector<double> help_scores;
        for (const AuditRow& row : rows) {
            if (row.model != tag) continue;
            if (row.category == "harmless-eval") {
                harm_scores.push_back(row.score);
            } else if (row.category == "helpful-eval") {
                help_scores.push_back(row.score);
            } else {
                throw ContractError("audit row has unknown category \"" + row.category + "\"");
            }
        }
        MetricSet set;
        set.tag = tag;
        set.hmr = compute_hmr(harm_scores, thresholds.harmful_below);
        set.hpr = compute_hpr(help_scores, thresholds.helpful_above);
        set.cas = compute_cas(set.hmr, set.hpr);
        set.harm_summary = summarize_scores(harm_scores);
        set.help_summary = summarize_scores(help_scores);
        set.avg_harm = set.harm_summary.mean;
        set.avg_help = set.help_summary.mean;
        set.n_harmless = static_cast<int64_t>(harm_scores.size());
        set.n_helpful = static_cast<int64_t>(help_scores.size());
        set.n_total = set.n_harmless + set.n_helpful;
        sets.push_back(set);
    }
    return sets;
}

std::vector<Improvement> build_improvements(const std::vector<MetricSet>& models) {
    const MetricSet* base = nullptr;
    for (const MetricSet& set : models) {
        if (set.tag == "base") base = &set;
    }
    std::vector<Improvement> improvements;
    if (base == nullptr) return improvements;
    for (const MetricSet& set : models) {
        if (set.tag == "base") continue;
        Improvement imp;
        imp.tag = set.tag;
        imp.d_hmr = compute_pct_improvement(set.hmr, base->hmr);
        imp.d_hpr = compute_pct_improvement(set.hpr, base->hpr);
        imp.d_cas = compute_pct_improvement(set.cas, base->cas);
        improvements.push_back(imp);
    }
    return improvements;
}

namespace {

void check_prompts(const std::vector<EvalPrompt>& prompts, const char* expected_category) {
    if (prompts.empty()) {
        throw ContractError(std::string("no ") + expected_category + " prompts given");
    }
    for (const EvalPrompt& p : prompts) {
        if (p.category != expected_category) {
            throw ContractError("prompt with source_index " + std::to_string(p.source_index) +
                                " has category \"" + p.category + "\", expected \"" +
                                expected_category + "\"");
        }
    }
}

std::vector<int> prompt_tokens_for(const TransformerModel& model, const std::string& text) {
    std::vector<int> bytes = tokenize(text);
    const int64_t budget = model.config.max_seq_len - 2;  // BOS plus one slot to generate
    if (static_cast<int64_t>(bytes.size()) > budget) {
        bytes.erase(bytes.begin(), bytes.end() - static_cast<ptrdiff_t>(budget));
    }
    std::vector<int> tokens;
    tokens.reserve(bytes.size() + 1);
    tokens.push_back(model.config.bos_id);
    tokens.insert(tokens.end(), bytes.begin(), bytes.end());
    return tokens;
}

}  // namespace

AlignmentReport run_alignment_eval(const std::vector<TaggedModel>& models,
                                   const std::vector<EvalPrompt>& harm_prompts,
                                   const std::vector<EvalPrompt>& help_prompts, Scorer& scorer,
                                   const EvalThresholds& thresholds,
                                   const GenerationConfig& gen_config,
                                   const std::string& audit_path, const EvalMeta& meta) {
    if (models.empty()) {
        throw ContractError("run_alignment_eval needs at least one model");
    }
    std::set<std::string> seen_tags;
    for (const TaggedModel& tagged : models) {
        if (tagged.tag.empty()) throw ContractError("model tags must be non-empty");
        if (tagged.model == nullptr) throw ContractError("model pointer for tag \"" + tagged.tag + "\" is null");
        if (!seen_tags.insert(tagged.tag).second) {
            throw ContractError("duplicate model tag \"" + tagged.tag + "\"");
        }
    }
    check_prompts(harm_prompts, "harmless-eval");
    check_prompts(help_prompts, "helpful-eval");
    thresholds.validate();
    gen_config.validate();

    AlignmentReport report;
    report.meta = meta;
    report.meta.thresholds = thresholds;
    report.meta.scorer = scorer.describe();
    report.meta.n_harm_prompts = static_cast<int64_t>(harm_prompts.size());
    report.meta.n_help_prompts = static_cast<int64_t>(help_prompts.size());
    report.meta.max_new_tokens = gen_config.max_new_tokens;
    report.audit_path = audit_path;

    std::ofstream audit(audit_path, std::ios::binary | std::ios::trunc);
    if (!audit) throw IoError("cannot open audit file \"" + audit_path + "\" for writing");
    {
        nlohmann::json line = meta_to_json(report.meta);
        line["type"] = "meta";
        audit << line.dump() << "\n" << std::flush;
    }

    for (const TaggedModel& tagged : models) {
        for (const std::vector<EvalPrompt>* list : {&harm_prompts, &help_prompts}) {
            for (const EvalPrompt& prompt : *list) {
                GenerationResult generation =
                    generate_greedy(*tagged.model, prompt_tokens_for(*tagged.model, prompt.text),
                                    gen_config);
                AuditRow row;
                row.model = tagged.tag;
                row.category = prompt.category;
                row.source_index = prompt.source_index;
                row.prompt = prompt.text;
                row.response = detokenize(generation.tokens);
                row.stop_reason = generation.stop_reason;

                ScoreRequest request;
                request.prompt = row.prompt;
                request.response = row.response;
                request.category = row.category;
                request.source_index = row.source_index;
                request.model_tag = row.model;
                try {
                    row.score = scorer.score(request);
                } catch (const Error& e) {
                    nlohmann::json marker;
                    marker["type"] = "partial";
                    marker["error"] = bytes_to_utf8(e.what());
                    audit << marker.dump() << "\n" << std::flush;
                    throw ScorerError("evaluation aborted; partial audit kept at \"" + audit_path +
                                      "\": " + e.what());
                }
                row.label = classify_response(row.score, row.category, thresholds);

                nlohmann::json line;
                line["type"] = "row";
                line["model"] = row.model;
                line["category"] = row.category;
                line["source_index"] = row.source_index;
                line["prompt"] = bytes_to_utf8(row.prompt);
                line["response"] = bytes_to_utf8(row.response);
                line["stop_reason"] = row.stop_reason;
                line["score"] = row.score;
                line["label"] = row.label;
                audit << line.dump() << "\n" << std::flush;
                report.rows.push_back(std::move(row));
            }
        }
    }

    report.models = aggregate_rows(report.rows, thresholds);
    report.improvements = build_improvements(report.models);
    return report;
}

AlignmentReport load_report_from_audit(const std::string& audit_path) {
    std::ifstream in(audit_path, std::ios::binary);
    if (!in) throw IoError("cannot open audit file \"" + audit_path + "\"");

    AlignmentReport report;
    report.audit_path = audit_path;
    std::string line;
    int64_t line_number = 0;
    bool meta_seen = false;
    while (std::getline(in, line)) {
        ++line_number;
        if (line.empty()) continue;
        nlohmann::json obj = nlohmann::json::parse(line, nullptr, false);
        if (obj.is_discarded() || !obj.is_object()) {
            throw FormatError("audit line " + std::to_string(line_number) + " is not a JSON object");
        }
        const std::string where = "line " + std::to_string(line_number);
        try {
            const std::string type = require_field(obj, "type", where).get<std::string>();
            if (type == "meta") {
                if (meta_seen) throw FormatError("audit has more than one meta line");
                report.meta = meta_from_json(obj);
                meta_seen = true;
            } else if (type == "row") {
                if (!meta_seen) throw FormatError("audit rows appear before the meta line");
                AuditRow row;
                row.model = require_field(obj, "model", where).get<std::string>();
                row.category = require_field(obj, "category", where).get<std::string>();
                row.source_index = require_field(obj, "source_index", where).get<int64_t>();
                row.prompt = utf8_to_bytes(require_field(obj, "prompt", where).get<std::string>());
                row.response =
                    utf8_to_bytes(require_field(obj, "response", where).get<std::string>());
                row.stop_reason = require_field(obj, "stop_reason", where).get<std::string>();
                row.score = require_field(obj, "score", where).get<double>();
                row.label = require_field(obj, "label", where).get<std::string>();
                report.rows.push_back(std::move(row));
            } else if (type == "partial") {
                throw StateError("audit file \"" + audit_path +
                                 "\" is marked partial; the evaluation it came from aborted");
            } else {
                throw FormatError("audit " + where + " has unknown type \"" + type + "\"");
            }
        } catch (const nlohmann::json::exception& e) {
            // A field with the wrong JSON type is as malformed as a missing one.
            throw FormatError("audit " + where + ": " + e.what());
        }
    }
    if (!meta_seen) throw FormatError("audit file \"" + audit_path + "\" has no meta line");
    if (report.rows.empty()) throw FormatError("audit file \"" + audit_path + "\" has no rows");

    report.models = aggregate_rows(report.rows, report.meta.thresholds);
    report.improvements = build_improvements(report.models);
    return report;
}

namespace {

std::string xml_escape(const std::string& text) {
    std::string out;
    out.reserve(text.size());
    for (char c : text) {
        switch (c) {
            case '&': out += "&amp;"; break;
            case '<': out += "&lt;"; break;
            case '>': out += "&gt;"; break;
            case '"': out += "&quot;"; break;
            default: out.push_back(c);
        }
    }
    return out;
}

std::string px(double value) {
    char buffer[64];
    std::snprintf(buffer, sizeof(buffer), "%.3f", value);
    return buffer;
}

std::string num(double value) {
    char buffer[64];
    std::snprintf(buffer, sizeof(buffer), "%.10g", value);
    return buffer;
}

constexpr double kSvgWidth = 640.0;
constexpr double kSvgHeight = 400.0;
constexpr double kPlotLeft = 50.0;
constexpr double kPlotRight = 630.0;
constexpr double kPlotTop = 30.0;
constexpr double kPlotBottom = 350.0;

void open_svg(std::string& svg, const std::string& title) {
    svg += "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"640\" height=\"400\" "
           "viewBox=\"0 0 640 400\" font-family=\"sans-serif\" font-size=\"11\">\n";
    svg += "  <title>" + xml_escape(title) + "</title>\n";
    svg += "  <rect x=\"0\" y=\"0\" width=\"640\" height=\"400\" fill=\"white\"/>\n";
}

void draw_frame(std::string& svg) {
    svg += "  <line x1=\"" + px(kPlotLeft) + "\" y1=\"" + px(kPlotTop) + "\" x2=\"" +
           px(kPlotLeft) + "\" y2=\"" + px(kPlotBottom) + "\" stroke=\"#333\"/>\n";
    svg += "  <line x1=\"" + px(kPlotLeft) + "\" y1=\"" + px(kPlotBottom) + "\" x2=\"" +
           px(kPlotRight) + "\" y2=\"" + px(kPlotBottom) + "\" stroke=\"#333\"/>\n";
}

const char* metric_color(const std::string& metric) {
    if (metric == "hmr") return "#4e79a7";
    if (metric == "hpr") return "#f28e2b";
    return "#76b7b2";
}

std::string metrics_svg(const AlignmentReport& report) {
    std::string svg;
    open_svg(svg, "Alignment metrics per model");
    draw_frame(svg);

    const double scale = (kPlotBottom - kPlotTop) / 100.0;  // 100 metric units tall
    for (int tick = 0; tick <= 100; tick += 25) {
        const double y = kPlotBottom - tick * scale;
        svg += "  <line x1=\"" + px(kPlotLeft - 4) + "\" y1=\"" + px(y) + "\" x2=\"" +
               px(kPlotRight) + "\" y2=\"" + px(y) + "\" stroke=\"#ddd\"/>\n";
        svg += "  <text x=\"" + px(kPlotLeft - 8) + "\" y=\"" + px(y + 4) +
               "\" text-anchor=\"end\">" + std::to_string(tick) + "</text>\n";
    }

    const size_t n_models = report.models.size();
    const double group_width = (kPlotRight - kPlotLeft) / static_cast<double>(n_models);
    const double bar_width = group_width * 0.25;
    const char* metric_names[] = {"hmr", "hpr", "cas"};

    for (size_t i = 0; i < n_models; ++i) {
        const MetricSet& set = report.models[i];
        const double group_x = kPlotLeft + static_cast<double>(i) * group_width;
        const double values[] = {set.hmr, set.hpr, set.cas};
        for (int j = 0; j < 3; ++j) {
            const double height = values[j] * scale;
            const double x = group_x + group_width * 0.125 + j * bar_width;
            const double y = kPlotBottom - height;
            svg += "  <rect x=\"" + px(x) + "\" y=\"" + px(y) + "\" width=\"" +
                   px(bar_width * 0.9) + "\" height=\"" + px(height) + "\" fill=\"" +
                   metric_color(metric_names[j]) + "\" data-model=\"" + xml_escape(set.tag) +
                   "\" data-metric=\"" + metric_names[j] + "\" data-value=\"" + num(values[j]) +
                   "\"/>\n";
            svg += "  <text x=\"" + px(x + bar_width * 0.45) + "\" y=\"" + px(y - 3) +
                   "\" text-anchor=\"middle\" font-size=\"9\">" + format_percentage(values[j]) +
                   "</text>\n";
        }
        svg += "  <text x=\"" + px(group_x + group_width / 2) + "\" y=\"" + px(kPlotBottom + 16) +
               "\" text-anchor=\"middle\">" + xml_escape(set.tag) + "</text>\n";
    }

    const char* legend_labels[] = {"HmR", "HpR", "CAS"};
    for (int j = 0; j < 3; ++j) {
        const double x = kPlotLeft + 10 + j * 70.0;
        svg += "  <rect x=\"" + px(x) + "\" y=\"10\" width=\"10\" height=\"10\" fill=\"" +
               std::string(metric_color(metric_names[j])) + "\"/>\n";
        svg += "  <text x=\"" + px(x + 14) + "\" y=\"19\">" + legend_labels[j] + "</text>\n";
    }
    svg += "</svg>\n";
    return svg;
}

std::string scores_svg(const AlignmentReport& report) {
    double lo = report.models[0].harm_summary.min;
    double hi = report.models[0].harm_summary.max;
    for (const MetricSet& set : report.models) {
        lo = std::min({lo, set.harm_summary.min, set.help_summary.min});
        hi = std::max({hi, set.harm_summary.max, set.help_summary.max});
    }
    const double pad = std::max(0.5, (hi - lo) * 0.1);
    const double y_min = lo - pad;
    const double y_max = hi + pad;
    const double scale = (kPlotBottom - kPlotTop) / (y_max - y_min);
    auto y_of = [&](double v) { return kPlotBottom - (v - y_min) * scale; };

    std::string svg;
    open_svg(svg, "Reward score distributions");
    draw_frame(svg);

    for (int tick = 0; tick <= 4; ++tick) {
        const double value = y_min + (y_max - y_min) * tick / 4.0;
        const double y = y_of(value);
        svg += "  <line x1=\"" + px(kPlotLeft - 4) + "\" y1=\"" + px(y) + "\" x2=\"" +
               px(kPlotRight) + "\" y2=\"" + px(y) + "\" stroke=\"#ddd\"/>\n";
        svg += "  <text x=\"" + px(kPlotLeft - 8) + "\" y=\"" + px(y + 4) +
               "\" text-anchor=\"end\">" + format_percentage(value) + "</text>\n";
    }

    struct Column {
        const MetricSet* set;
        const ScoreSummary* summary;
        const char* category;
        const char* color;
    };
    std::vector<Column> columns;
    for (const MetricSet& set : report.models) {
        columns.push_back({&set, &set.harm_summary, "harmless-eval", "#4e79a7"});
        columns.push_back({&set, &set.help_summary, "helpful-eval", "#f28e2b"});
    }

    const double slot_width = (kPlotRight - kPlotLeft) / static_cast<double>(columns.size());
    for (size_t i = 0; i < columns.size(); ++i) {
        const Column& col = columns[i];
        const ScoreSummary& s = *col.summary;
        const double center = kPlotLeft + (static_cast<double>(i) + 0.5) * slot_width;
        const double half_box = slot_width * 0.25;

        svg += "  <line x1=\"" + px(center) + "\" y1=\"" + px(y_of(s.max)) + "\" x2=\"" +
               px(center) + "\" y2=\"" + px(y_of(s.min)) + "\" stroke=\"#555\"/>\n";
        for (double cap : {s.min, s.max}) {
            svg += "  <line x1=\"" + px(center - half_box * 0.6) + "\" y1=\"" + px(y_of(cap)) +
                   "\" x2=\"" + px(center + half_box * 0.6) + "\" y2=\"" + px(y_of(cap)) +
                   "\" stroke=\"#555\"/>\n";
        }
        svg += "  <rect x=\"" + px(center - half_box) + "\" y=\"" + px(y_of(s.q3)) +
               "\" width=\"" + px(half_box * 2) + "\" height=\"" + px((s.q3 - s.q1) * scale) +
               "\" fill=\"" + col.color + "\" fill-opacity=\"0.6\" stroke=\"#333\"" +
               " data-model=\"" + xml_escape(col.set->tag) + "\" data-category=\"" + col.category +
               "\" data-min=\"" + num(s.min) + "\" data-q1=\"" + num(s.q1) + "\" data-median=\"" +
               num(s.median) + "\" data-q3=\"" + num(s.q3) + "\" data-max=\"" + num(s.max) +
               "\"/>\n";
        svg += "  <line x1=\"" + px(center - half_box) + "\" y1=\"" + px(y_of(s.median)) +
               "\" x2=\"" + px(center + half_box) + "\" y2=\"" + px(y_of(s.median)) +
               "\" stroke=\"#111\" stroke-width=\"2\"/>\n";
        svg += "  <text x=\"" + px(center) + "\" y=\"" + px(kPlotBottom + 16) +
               "\" text-anchor=\"middle\" font-size=\"9\">" + xml_escape(col.set->tag) + "</text>\n";
    }

    svg += "  <rect x=\"60\" y=\"10\" width=\"10\" height=\"10\" fill=\"#4e79a7\" fill-opacity=\"0.6\"/>\n";
    svg += "  <text x=\"74\" y=\"19\">harmless-eval</text>\n";
    svg += "  <rect x=\"160\" y=\"10\" width=\"10\" height=\"10\" fill=\"#f28e2b\" fill-opacity=\"0.6\"/>\n";
    svg += "  <text x=\"174\" y=\"19\">helpful-eval</text>\n";
    svg += "</svg>\n";
    return svg;
}

nlohmann::json report_to_json(const AlignmentReport& report) {
    nlohmann::json j;
    j["meta"] = meta_to_json(report.meta);
    j["models"] = nlohmann::json::array();
    for (const MetricSet& set : report.models) {
        nlohmann::json m;
        m["tag"] = set.tag;
        m["hmr"] = set.hmr;
        m["hpr"] = set.hpr;
        m["cas"] = set.cas;
        m["avg_harm"] = set.avg_harm;
        m["avg_help"] = set.avg_help;
        m["counts"] = {{"total", set.n_total},
                       {"harmless", set.n_harmless},
                       {"helpful", set.n_helpful}};
        m["summary"] = {{"harmless", summary_to_json(set.harm_summary)},
                        {"helpful", summary_to_json(set.help_summary)}};
        j["models"].push_back(std::move(m));
    }
    j["improvements"] = nlohmann::json::array();
    for (const Improvement& imp : report.improvements) {
        j["improvements"].push_back({{"tag", imp.tag},
                                     {"d_hmr", imp.d_hmr},
                                     {"d_hpr", imp.d_hpr},
                                     {"d_cas", imp.d_cas}});
    }
    j["audit_path"] = report.audit_path;
    return j;
}

void write_text_file(const std::filesystem::path& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open \"" + path.string() + "\" for writing");
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
    if (!out) throw IoError("failed writing \"" + path.string() + "\"");
}

}  // namespace

void emit_report(const AlignmentReport& report, const std::string& out_dir) {
    if (report.models.empty()) {
        throw ContractError("cannot emit a report with no models");
    }
    namespace fs = std::filesystem;
    std::error_code ec;
    fs::create_directories(out_dir, ec);
    if (ec) throw IoError("cannot create output directory \"" + out_dir + "\": " + ec.message());
    fs::path dir(out_dir);

    write_text_file(dir / "report.json", report_to_json(report).dump(2) + "\n");

    std::string csv = "model,metric,value\n";
    for (const MetricSet& set : report.models) {
        csv += set.tag + ",hmr," + format_percentage(set.hmr) + "\n";
        csv += set.tag + ",hpr," + format_percentage(set.hpr) + "\n";
        csv += set.tag + ",cas," + format_percentage(set.cas) + "\n";
    }
    write_text_file(dir / "report.csv", csv);

    write_text_file(dir / "metrics.svg", metrics_svg(report));
    write_text_file(dir / "scores.svg", scores_svg(report));
}

}  // namespace alignkit
