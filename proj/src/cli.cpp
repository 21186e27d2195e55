#include "alignkit/cli.h"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <optional>
#include <set>
#include <sstream>
#include <stdexcept>

#include "CLI11.hpp"
#include "json.hpp"

#include "alignkit/checkpoint.h"
#include "alignkit/data.h"
#include "alignkit/errors.h"
#include "alignkit/gen.h"
#include "alignkit/metrics.h"
#include "alignkit/model.h"
#include "alignkit/report.h"
#include "alignkit/rng.h"
#include "alignkit/scorer.h"
#include "alignkit/tokenizer.h"
#include "alignkit/trainer.h"

namespace alignkit {
namespace {

using nlohmann::json;

/// A structurally valid command line whose required pieces are missing.
/// Reported as a usage failure (exit 1), unlike runtime errors (exit 2).
struct UsageError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Ties options to config-file keys so `--config file.json` can fill any
/// flag the command line left unset. Flags always win; the merged values
/// are what the manifest echoes.
class OptionBinder {
  public:
    explicit OptionBinder(CLI::App* cmd) : cmd_(cmd) {
        cmd->add_option("--config", config_path_,
                        "JSON object with defaults for any flag of this command (flags win)");
    }

    template <typename T>
    CLI::Option* bind(const std::string& flag, T& value, const std::string& help) {
        CLI::Option* opt = cmd_->add_option(flag, value, help);
        entries_.push_back({opt, key_of(flag), [&value](const json& j) { value = j.get<T>(); }});
        return opt;
    }

    CLI::Option* bind_flag(const std::string& flag, bool& value, const std::string& help) {
        CLI::Option* opt = cmd_->add_flag(flag, value, help);
        entries_.push_back({opt, key_of(flag), [&value](const json& j) { value = j.get<bool>(); }});
        return opt;
    }

    /// Loads the config file if one was named and fills every option the
    /// command line did not set. Unknown keys are rejected: a typo that
    /// silently does nothing would be worse than an error.
    std::string merge() const {
        if (config_path_.empty()) return config_path_;
        std::ifstream in(config_path_, std::ios::binary);
        if (!in) throw IoError("cannot open config file \"" + config_path_ + "\"");
        const json cfg = json::parse(in, nullptr, false);
        if (cfg.is_discarded() || !cfg.is_object()) {
            throw ConfigError("config file \"" + config_path_ + "\" is not a JSON object");
        }
        std::set<std::string> known;
        for (const Entry& entry : entries_) known.insert(entry.key);
        for (const auto& [key, value] : cfg.items()) {
            if (!known.count(key)) {
                throw ConfigError("config file key \"" + key +
                                  "\" matches no flag of this command");
            }
        }
        for (const Entry& entry : entries_) {
            if (entry.opt->count() == 0 && cfg.contains(entry.key)) {
                try {
                    entry.apply(cfg.at(entry.key));
                } catch (const json::exception& e) {
                    throw ConfigError("config key \"" + entry.key + "\": " + e.what());
                }
            }
        }
        return config_path_;
    }

  private:
    struct Entry {
        CLI::Option* opt;
        std::string key;
        std::function<void(const json&)> apply;
    };

    static std::string key_of(const std::string& flag) {
        const size_t end = flag.find(',');
        std::string name = flag.substr(0, end);
        return name.substr(name.find_first_not_of('-'));
    }

    CLI::App* cmd_;
    std::string config_path_;
    std::vector<Entry> entries_;
};

void require_set(const char* flag, const std::string& value) {
    if (value.empty()) {
        throw UsageError(std::string("missing required option ") + flag);
    }
}

std::string hex64(uint64_t value) {
    char buffer[17];
    std::snprintf(buffer, sizeof(buffer), "%016llx", static_cast<unsigned long long>(value));
    return buffer;
}

json input_digest(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open \"" + path + "\" for digesting");
    std::ostringstream buffer;
    buffer << in.rdbuf();
    return json{{"path", path}, {"fnv1a64", hex64(fnv1a64(buffer.str()))}};
}

void write_manifest(const std::string& path, const json& manifest) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write manifest \"" + path + "\"");
    out << manifest.dump(2) << "\n";
    if (!out) throw IoError("failed writing manifest \"" + path + "\"");
}

std::vector<std::string> split_csv(const std::string& text) {
    std::vector<std::string> parts;
    std::string item;
    std::istringstream in(text);
    while (std::getline(in, item, ',')) {
        if (!item.empty()) parts.push_back(item);
    }
    return parts;
}

DType parse_dtype(const std::string& text) {
    if (text == "f32") return DType::F32;
    if (text == "f64") return DType::F64;
    throw ConfigError("dtype must be f32 or f64, got \"" + text + "\"");
}

/// Mirrors load_jsonl's directory resolution so manifests can digest the
/// actual file that was read.
std::string resolve_data_file(const std::string& data, const std::string& split) {
    namespace fs = std::filesystem;
    if (fs::is_directory(data)) return (fs::path(data) / (split + ".jsonl")).string();
    return data;
}

std::vector<PreferenceRecord> load_training_records(const std::string& data,
                                                    const std::string& split, int64_t max_records,
                                                    uint64_t seed, json& stats_out) {
    auto [records, stats] = load_jsonl(data, split);
    stats_out["loaded"] = stats.loaded;
    stats_out["skipped"] = stats.skipped;
    stats_out["skip_reasons"] = stats.reasons;
    if (max_records > 0 && max_records < static_cast<int64_t>(records.size())) {
        records = sample_subset(records, max_records, derive_seed(seed, "subsample"));
        stats_out["subsampled_to"] = max_records;
    }
    return records;
}

/// BOS plus the prompt bytes, left-truncated so at least one slot remains
/// to generate into.
std::vector<int> bos_prompt_tokens(const ModelConfig& config, const std::string& text) {
    std::vector<int> bytes = tokenize(text);
    const int64_t budget = config.max_seq_len - 2;
    if (static_cast<int64_t>(bytes.size()) > budget) {
        bytes.erase(bytes.begin(), bytes.end() - static_cast<ptrdiff_t>(budget));
    }
    std::vector<int> tokens;
    tokens.reserve(bytes.size() + 1);
    tokens.push_back(config.bos_id);
    tokens.insert(tokens.end(), bytes.begin(), bytes.end());
    return tokens;
}

void print_report_tables(const AlignmentReport& report, std::ostream& out) {
    char line[160];
    out << "model        HmR      HpR      CAS\n";
    for (const MetricSet& set : report.models) {
        std::snprintf(line, sizeof(line), "%-10s %7s  %7s  %7s\n", set.tag.c_str(),
                      format_percentage(set.hmr).c_str(), format_percentage(set.hpr).c_str(),
                      format_percentage(set.cas).c_str());
        out << line;
    }
    if (!report.improvements.empty()) {
        out << "vs base      dHmR     dHpR     dCAS\n";
        for (const Improvement& imp : report.improvements) {
            std::snprintf(line, sizeof(line), "%-10s %7s  %7s  %7s\n", imp.tag.c_str(),
                          format_signed_percentage(imp.d_hmr).c_str(),
                          format_signed_percentage(imp.d_hpr).c_str(),
                          format_signed_percentage(imp.d_cas).c_str());
            out << line;
        }
    }
}

// ---------------------------------------------------------------- init ----

struct InitOpts {
    std::string out;
    uint64_t seed = 42;
    int64_t d_model = 128;
    int64_t n_layers = 4;
    int64_t n_heads = 4;
    int64_t d_ff = 512;
    int64_t max_seq_len = 256;
    std::string dtype = "f32";
};

void run_init(const InitOpts& opts, const std::string& config_path, std::ostream& out) {
    require_set("--out", opts.out);
    ModelConfig config;
    config.d_model = opts.d_model;
    config.n_layers = opts.n_layers;
    config.n_heads = opts.n_heads;
    config.d_ff = opts.d_ff;
    config.max_seq_len = opts.max_seq_len;
    config.validate();

    TransformerModel model = init_model(config, derive_seed(opts.seed, "init"),
                                        parse_dtype(opts.dtype));
    Provenance provenance;
    provenance.method = "base";
    provenance.epochs = 0;
    provenance.seed = opts.seed;
    save_checkpoint(model, opts.out, provenance);

    json manifest;
    manifest["command"] = "init";
    manifest["seed"] = opts.seed;
    manifest["config"] = {{"out", opts.out},       {"seed", opts.seed},
                          {"d-model", opts.d_model}, {"n-layers", opts.n_layers},
                          {"n-heads", opts.n_heads}, {"d-ff", opts.d_ff},
                          {"max-seq-len", opts.max_seq_len}, {"dtype", opts.dtype}};
    if (!config_path.empty()) manifest["config_file"] = config_path;
    manifest["inputs"] = json::object();
    manifest["outputs"] = {{"checkpoint", input_digest(opts.out)}};
    write_manifest(opts.out + ".manifest.json", manifest);
    out << "wrote base checkpoint " << opts.out << "\n";
}

// ----------------------------------------------------------- train-sft ----

struct TrainSftOpts {
    std::string init;
    std::string data;
    std::string split = "train";
    std::string out;
    std::string log;
    uint64_t seed = 42;
    int64_t epochs = 2;
    int64_t batch_size = 8;
    double lr = 5e-5;
    double weight_decay = 0.01;
    double clip_norm = 1.0;
    int64_t max_records = 0;
};

void run_train_sft(const TrainSftOpts& opts, const std::string& config_path, std::ostream& out) {
    require_set("--init", opts.init);
    require_set("--data", opts.data);
    require_set("--out", opts.out);

    ModelCheckpoint start = load_checkpoint(opts.init);
    json data_stats;
    std::vector<PreferenceRecord> records =
        load_training_records(opts.data, opts.split, opts.max_records, opts.seed, data_stats);

    TrainConfig config = TrainConfig::sft_defaults();
    config.seed = opts.seed;
    config.epochs = opts.epochs;
    config.batch_size = opts.batch_size;
    config.clip_norm = opts.clip_norm;
    config.adamw.lr = opts.lr;
    config.adamw.weight_decay = opts.weight_decay;
    config.log_path = opts.log;

    const TrainResult result = train_sft(start.model, records, config, start.provenance);
    save_checkpoint(start.model, opts.out, result.provenance);

    json manifest;
    manifest["command"] = "train-sft";
    manifest["seed"] = opts.seed;
    manifest["config"] = {{"init", opts.init},       {"data", opts.data},
                          {"split", opts.split},     {"out", opts.out},
                          {"log", opts.log},         {"seed", opts.seed},
                          {"epochs", opts.epochs},   {"batch-size", opts.batch_size},
                          {"lr", opts.lr},           {"weight-decay", opts.weight_decay},
                          {"clip-norm", opts.clip_norm}, {"max-records", opts.max_records}};
    if (!config_path.empty()) manifest["config_file"] = config_path;
    manifest["inputs"] = {{"init", input_digest(opts.init)},
                          {"data", input_digest(resolve_data_file(opts.data, opts.split))}};
    manifest["data_stats"] = data_stats;
    manifest["outputs"] = {{"checkpoint", input_digest(opts.out)}};
    manifest["result"] = {{"steps", result.steps},
                          {"final_loss", result.final_loss},
                          {"mean_loss", result.mean_loss}};
    write_manifest(opts.out + ".manifest.json", manifest);

    char line[160];
    std::snprintf(line, sizeof(line), "sft: steps=%lld final_loss=%.6f mean_loss=%.6f\n",
                  static_cast<long long>(result.steps), result.final_loss, result.mean_loss);
    out << line << "wrote " << opts.out << "\n";
}

// ----------------------------------------------------------- train-dpo ----

struct TrainDpoOpts {
    std::string init;
    std::string data;
    std::string split = "train";
    std::string out;
    std::string log;
    std::string variant = "paper";
    bool lora = true;
    int64_t lora_rank = 8;
    double lora_alpha = 16.0;
    std::string lora_targets = "q,v";
    bool merge = false;
    uint64_t seed = 42;
    int64_t epochs = 1;
    int64_t batch_size = 8;
    double lr = 1e-4;
    double beta = 0.1;
    double weight_decay = 0.01;
    double clip_norm = 1.0;
    int64_t max_records = 0;
};

void run_train_dpo(const TrainDpoOpts& opts, const std::string& config_path, std::ostream& out) {
    require_set("--init", opts.init);
    require_set("--data", opts.data);
    require_set("--out", opts.out);
    if (opts.variant != "paper" && opts.variant != "ref") {
        throw ConfigError("--variant must be paper or ref, got \"" + opts.variant + "\"");
    }

    ModelCheckpoint start = load_checkpoint(opts.init);
    std::optional<TransformerModel> reference;
    if (opts.variant == "ref") reference = start.model.clone();
    if (opts.lora) {
        LoraConfig lora_config;
        lora_config.rank = opts.lora_rank;
        lora_config.alpha = opts.lora_alpha;
        lora_config.targets = split_csv(opts.lora_targets);
        start.model.attach_lora(lora_config, derive_seed(opts.seed, "lora"));
    }

    json data_stats;
    std::vector<PreferenceRecord> records =
        load_training_records(opts.data, opts.split, opts.max_records, opts.seed, data_stats);

    TrainConfig config = TrainConfig::dpo_defaults();
    config.seed = opts.seed;
    config.epochs = opts.epochs;
    config.batch_size = opts.batch_size;
    config.clip_norm = opts.clip_norm;
    config.beta = opts.beta;
    config.adamw.lr = opts.lr;
    config.adamw.weight_decay = opts.weight_decay;
    config.log_path = opts.log;

    const TrainResult result = train_dpo(start.model, reference ? &*reference : nullptr, records,
                                         config, start.provenance);
    if (opts.merge && start.model.has_lora()) start.model.merge_lora();
    save_checkpoint(start.model, opts.out, result.provenance);

    json manifest;
    manifest["command"] = "train-dpo";
    manifest["seed"] = opts.seed;
    manifest["config"] = {{"init", opts.init},
                          {"data", opts.data},
                          {"split", opts.split},
                          {"out", opts.out},
                          {"log", opts.log},
                          {"variant", opts.variant},
                          {"lora", opts.lora},
                          {"lora-rank", opts.lora_rank},
                          {"lora-alpha", opts.lora_alpha},
                          {"lora-targets", opts.lora_targets},
                          {"merge", opts.merge},
                          {"seed", opts.seed},
                          {"epochs", opts.epochs},
                          {"batch-size", opts.batch_size},
                          {"lr", opts.lr},
                          {"beta", opts.beta},
                          {"weight-decay", opts.weight_decay},
                          {"clip-norm", opts.clip_norm},
                          {"max-records", opts.max_records}};
    if (!config_path.empty()) manifest["config_file"] = config_path;
    manifest["inputs"] = {{"init", input_digest(opts.init)},
                          {"data", input_digest(resolve_data_file(opts.data, opts.split))}};
    manifest["data_stats"] = data_stats;
    manifest["outputs"] = {{"checkpoint", input_digest(opts.out)}};
    manifest["result"] = {{"steps", result.steps},
                          {"final_loss", result.final_loss},
                          {"mean_margin", result.mean_margin},
                          {"pair_accuracy", result.pair_accuracy},
                          {"provenance", result.provenance.method}};
    write_manifest(opts.out + ".manifest.json", manifest);

    char line[200];
    std::snprintf(line, sizeof(line),
                  "dpo(%s): steps=%lld final_loss=%.6f mean_margin=%.6f pair_accuracy=%.4f\n",
                  result.provenance.method.c_str(), static_cast<long long>(result.steps),
                  result.final_loss, result.mean_margin, result.pair_accuracy);
    out << line << "wrote " << opts.out << "\n";
}

// ------------------------------------------------------------------ gen ----

struct GenOpts {
    std::string ckpt;
    std::string prompt;
    std::string out_file;
    std::string manifest;
    int64_t max_new_tokens = 50;
    bool no_stop_on_eos = false;
};

void run_gen(const GenOpts& opts, const std::string& config_path, std::ostream& out) {
    require_set("--ckpt", opts.ckpt);

    const ModelCheckpoint checkpoint = load_checkpoint(opts.ckpt);
    GenerationConfig config;
    config.max_new_tokens = opts.max_new_tokens;
    config.stop_on_eos = !opts.no_stop_on_eos;
    const GenerationResult result = generate_greedy(
        checkpoint.model, bos_prompt_tokens(checkpoint.model.config, opts.prompt), config);
    const std::string text = detokenize(result.tokens);

    out << text << "\n";
    if (!opts.out_file.empty()) {
        std::ofstream file(opts.out_file, std::ios::binary | std::ios::trunc);
        if (!file) throw IoError("cannot write \"" + opts.out_file + "\"");
        file << text;
    }

    const std::string manifest_path =
        !opts.manifest.empty() ? opts.manifest
        : !opts.out_file.empty() ? opts.out_file + ".manifest.json"
                                 : std::string("alignkit_manifest.json");
    json manifest;
    manifest["command"] = "gen";
    manifest["config"] = {{"ckpt", opts.ckpt},
                          {"prompt", opts.prompt},
                          {"out", opts.out_file},
                          {"max-new-tokens", opts.max_new_tokens},
                          {"no-stop-on-eos", opts.no_stop_on_eos}};
    if (!config_path.empty()) manifest["config_file"] = config_path;
    manifest["inputs"] = {{"ckpt", input_digest(opts.ckpt)}};
    manifest["result"] = {{"stop_reason", result.stop_reason},
                          {"tokens", static_cast<int64_t>(result.tokens.size())},
                          {"response_fnv1a64", hex64(fnv1a64(text))}};
    write_manifest(manifest_path, manifest);
}

// ------------------------------------------------------- filter-prompts ----

struct FilterOpts {
    std::string data;
    std::string split = "test";
    std::string keywords;
    std::string out;
    int64_t n = 50;
    uint64_t seed = 42;
};

json prompts_to_json(const std::vector<EvalPrompt>& prompts) {
    json array = json::array();
    for (const EvalPrompt& prompt : prompts) {
        array.push_back({{"text", prompt.text}, {"source_index", prompt.source_index}});
    }
    return array;
}

void run_filter_prompts(const FilterOpts& opts, const std::string& config_path,
                        std::ostream& out) {
    require_set("--data", opts.data);
    require_set("--keywords", opts.keywords);
    require_set("--out", opts.out);

    auto [records, stats] = load_jsonl(opts.data, opts.split);
    const std::vector<std::string> keywords = split_csv(opts.keywords);
    std::vector<EvalPrompt> harm = filter_harmful_prompts(records, keywords);
    std::vector<EvalPrompt> help = select_benign_prompts(records, keywords);
    if (opts.n > 0) {
        harm = sample_subset(harm, opts.n, derive_seed(opts.seed, "harm-prompts"));
        help = sample_subset(help, opts.n, derive_seed(opts.seed, "help-prompts"));
    }

    json doc;
    doc["keywords"] = keywords;
    doc["seed"] = opts.seed;
    doc["harmless-eval"] = prompts_to_json(harm);
    doc["helpful-eval"] = prompts_to_json(help);
    std::ofstream file(opts.out, std::ios::binary | std::ios::trunc);
    if (!file) throw IoError("cannot write \"" + opts.out + "\"");
    file << doc.dump(2) << "\n";

    json manifest;
    manifest["command"] = "filter-prompts";
    manifest["seed"] = opts.seed;
    manifest["config"] = {{"data", opts.data},   {"split", opts.split},
                          {"keywords", opts.keywords}, {"out", opts.out},
                          {"n", opts.n},         {"seed", opts.seed}};
    if (!config_path.empty()) manifest["config_file"] = config_path;
    manifest["inputs"] = {{"data", input_digest(resolve_data_file(opts.data, opts.split))}};
    manifest["data_stats"] = {{"loaded", stats.loaded}, {"skipped", stats.skipped}};
    manifest["outputs"] = {{"prompts", input_digest(opts.out)}};
    write_manifest(opts.out + ".manifest.json", manifest);

    out << "harmless-eval: " << harm.size() << " prompts, helpful-eval: " << help.size()
        << " prompts -> " << opts.out << "\n";
}

// ----------------------------------------------------------------- eval ----

struct EvalOpts {
    std::string models;
    std::string scorer = "lexical";
    std::string prompts;
    std::string out_dir;
    int64_t max_new_tokens = 50;
    double harmful_below = -3.0;
    double helpful_above = -2.0;
    uint64_t seed = 42;
};

std::vector<std::pair<std::string, std::string>> parse_model_list(const std::string& text) {
    std::vector<std::pair<std::string, std::string>> pairs;
    for (const std::string& item : split_csv(text)) {
        const size_t eq = item.find('=');
        if (eq == std::string::npos || eq == 0 || eq + 1 == item.size()) {
            throw UsageError("--models entries must look like tag=checkpoint, got \"" + item +
                             "\"");
        }
        pairs.emplace_back(item.substr(0, eq), item.substr(eq + 1));
    }
    if (pairs.empty()) throw UsageError("--models names no models");
    return pairs;
}

struct PromptSets {
    std::vector<EvalPrompt> harm;
    std::vector<EvalPrompt> help;
    std::vector<std::string> keywords;
};

PromptSets load_prompt_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open prompts file \"" + path + "\"");
    const json doc = json::parse(in, nullptr, false);
    if (doc.is_discarded() || !doc.is_object()) {
        throw FormatError("prompts file \"" + path + "\" is not a JSON object");
    }
    PromptSets sets;
    try {
        if (doc.contains("keywords")) {
            sets.keywords = doc.at("keywords").get<std::vector<std::string>>();
        }
        const auto read_list = [&](const char* category, std::vector<EvalPrompt>& into) {
            if (!doc.contains(category)) {
                throw FormatError("prompts file \"" + path + "\" is missing \"" +
                                  std::string(category) + "\"");
            }
            for (const json& entry : doc.at(category)) {
                EvalPrompt prompt;
                prompt.text = entry.at("text").get<std::string>();
                prompt.source_index = entry.at("source_index").get<int64_t>();
                prompt.category = category;
                into.push_back(std::move(prompt));
            }
        };
        read_list("harmless-eval", sets.harm);
        read_list("helpful-eval", sets.help);
    } catch (const json::exception& e) {
        throw FormatError("prompts file \"" + path + "\": " + e.what());
    }
    return sets;
}

void run_eval(const EvalOpts& opts, const std::string& config_path, std::ostream& out) {
    require_set("--models", opts.models);
    require_set("--prompts", opts.prompts);
    require_set("--out", opts.out_dir);

    const auto pairs = parse_model_list(opts.models);
    std::vector<ModelCheckpoint> checkpoints;
    checkpoints.reserve(pairs.size());
    std::vector<TaggedModel> tagged;
    for (const auto& [tag, path] : pairs) {
        checkpoints.push_back(load_checkpoint(path));
        tagged.push_back({tag, &checkpoints.back().model});
    }

    const PromptSets prompts = load_prompt_file(opts.prompts);
    const std::unique_ptr<Scorer> scorer = make_scorer(ScorerSpec::parse(opts.scorer));
    EvalThresholds thresholds;
    thresholds.harmful_below = opts.harmful_below;
    thresholds.helpful_above = opts.helpful_above;
    GenerationConfig gen_config;
    gen_config.max_new_tokens = opts.max_new_tokens;

    std::error_code ec;
    std::filesystem::create_directories(opts.out_dir, ec);
    if (ec) throw IoError("cannot create \"" + opts.out_dir + "\": " + ec.message());

    EvalMeta meta;
    meta.seed = opts.seed;
    meta.keywords = prompts.keywords;
    const std::string audit_path = opts.out_dir + "/audit.jsonl";
    const AlignmentReport report = run_alignment_eval(tagged, prompts.harm, prompts.help, *scorer,
                                                      thresholds, gen_config, audit_path, meta);
    emit_report(report, opts.out_dir);

    json manifest;
    manifest["command"] = "eval";
    manifest["seed"] = opts.seed;
    manifest["config"] = {{"models", opts.models},
                          {"scorer", opts.scorer},
                          {"prompts", opts.prompts},
                          {"out", opts.out_dir},
                          {"max-new-tokens", opts.max_new_tokens},
                          {"harmful-below", opts.harmful_below},
                          {"helpful-above", opts.helpful_above},
                          {"seed", opts.seed}};
    if (!config_path.empty()) manifest["config_file"] = config_path;
    json inputs;
    inputs["prompts"] = input_digest(opts.prompts);
    for (const auto& [tag, path] : pairs) {
        inputs["model:" + tag] = input_digest(path);
    }
    manifest["inputs"] = inputs;
    manifest["outputs"] = {{"audit", input_digest(audit_path)},
                           {"report", input_digest(opts.out_dir + "/report.json")}};
    write_manifest(opts.out_dir + "/manifest.json", manifest);

    print_report_tables(report, out);
    out << "report written to " << opts.out_dir << "\n";
}

// --------------------------------------------------------------- report ----

struct ReportOpts {
    std::string audit;
    std::string out_dir;
};

void run_report(const ReportOpts& opts, const std::string& config_path, std::ostream& out) {
    require_set("--audit", opts.audit);
    require_set("--out", opts.out_dir);

    const AlignmentReport report = load_report_from_audit(opts.audit);
    emit_report(report, opts.out_dir);

    json manifest;
    manifest["command"] = "report";
    manifest["config"] = {{"audit", opts.audit}, {"out", opts.out_dir}};
    if (!config_path.empty()) manifest["config_file"] = config_path;
    manifest["inputs"] = {{"audit", input_digest(opts.audit)}};
    manifest["outputs"] = {{"report", input_digest(opts.out_dir + "/report.json")}};
    write_manifest(opts.out_dir + "/manifest.json", manifest);

    print_report_tables(report, out);
    out << "report written to " << opts.out_dir << "\n";
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"alignkit: train and evaluate desk-scale aligned language models", "alignkit"};
    app.require_subcommand(1);

    InitOpts init_opts;
    CLI::App* init_cmd = app.add_subcommand("init", "Create a randomly initialized base checkpoint");
    OptionBinder init_bind(init_cmd);
    init_bind.bind("--out", init_opts.out, "Checkpoint path to write");
    init_bind.bind("--seed", init_opts.seed, "Root seed");
    init_bind.bind("--d-model", init_opts.d_model, "Embedding width");
    init_bind.bind("--n-layers", init_opts.n_layers, "Decoder layers");
    init_bind.bind("--n-heads", init_opts.n_heads, "Attention heads");
    init_bind.bind("--d-ff", init_opts.d_ff, "Feed-forward width");
    init_bind.bind("--max-seq-len", init_opts.max_seq_len, "Context length");
    init_bind.bind("--dtype", init_opts.dtype, "Parameter dtype: f32 or f64");

    TrainSftOpts sft_opts;
    CLI::App* sft_cmd = app.add_subcommand("train-sft", "Supervised fine-tuning on chosen responses");
    OptionBinder sft_bind(sft_cmd);
    sft_bind.bind("--init", sft_opts.init, "Starting checkpoint");
    sft_bind.bind("--data", sft_opts.data, "JSONL file or directory of preference pairs");
    sft_bind.bind("--split", sft_opts.split, "Split name when --data is a directory");
    sft_bind.bind("--out", sft_opts.out, "Checkpoint path to write");
    sft_bind.bind("--log", sft_opts.log, "Optional JSONL training log path");
    sft_bind.bind("--seed", sft_opts.seed, "Root seed");
    sft_bind.bind("--epochs", sft_opts.epochs, "Training epochs");
    sft_bind.bind("--batch-size", sft_opts.batch_size, "Examples per step");
    sft_bind.bind("--lr", sft_opts.lr, "AdamW learning rate");
    sft_bind.bind("--weight-decay", sft_opts.weight_decay, "Decoupled weight decay");
    sft_bind.bind("--clip-norm", sft_opts.clip_norm, "Global gradient-norm clip");
    sft_bind.bind("--max-records", sft_opts.max_records, "Subsample the dataset (0 = all)");

    TrainDpoOpts dpo_opts;
    CLI::App* dpo_cmd = app.add_subcommand("train-dpo", "Direct preference optimization");
    OptionBinder dpo_bind(dpo_cmd);
    dpo_bind.bind("--init", dpo_opts.init, "Starting checkpoint (base or sft)");
    dpo_bind.bind("--data", dpo_opts.data, "JSONL file or directory of preference pairs");
    dpo_bind.bind("--split", dpo_opts.split, "Split name when --data is a directory");
    dpo_bind.bind("--out", dpo_opts.out, "Checkpoint path to write");
    dpo_bind.bind("--log", dpo_opts.log, "Optional JSONL training log path");
    dpo_bind.bind("--variant", dpo_opts.variant,
                  "Loss form: paper (reference-free) or ref (anchored to the init model)");
    dpo_bind.bind_flag("--lora,!--no-lora", dpo_opts.lora, "Train low-rank adapters (default on)");
    dpo_bind.bind("--lora-rank", dpo_opts.lora_rank, "Adapter rank");
    dpo_bind.bind("--lora-alpha", dpo_opts.lora_alpha, "Adapter scale numerator");
    dpo_bind.bind("--lora-targets", dpo_opts.lora_targets, "Projections to adapt, e.g. q,v");
    dpo_bind.bind_flag("--merge", dpo_opts.merge, "Fold adapters into base weights before saving");
    dpo_bind.bind("--seed", dpo_opts.seed, "Root seed");
    dpo_bind.bind("--epochs", dpo_opts.epochs, "Training epochs");
    dpo_bind.bind("--batch-size", dpo_opts.batch_size, "Pairs per step");
    dpo_bind.bind("--lr", dpo_opts.lr, "AdamW learning rate");
    dpo_bind.bind("--beta", dpo_opts.beta, "Preference temperature");
    dpo_bind.bind("--weight-decay", dpo_opts.weight_decay, "Decoupled weight decay");
    dpo_bind.bind("--clip-norm", dpo_opts.clip_norm, "Global gradient-norm clip");
    dpo_bind.bind("--max-records", dpo_opts.max_records, "Subsample the dataset (0 = all)");

    GenOpts gen_opts;
    CLI::App* gen_cmd = app.add_subcommand("gen", "Greedy generation from a checkpoint");
    OptionBinder gen_bind(gen_cmd);
    gen_bind.bind("--ckpt", gen_opts.ckpt, "Checkpoint to generate from");
    gen_bind.bind("--prompt", gen_opts.prompt, "Prompt text");
    gen_bind.bind("--out", gen_opts.out_file, "Optional file for the raw response");
    gen_bind.bind("--manifest", gen_opts.manifest, "Manifest path override");
    gen_bind.bind("--max-new-tokens", gen_opts.max_new_tokens, "Generation budget");
    gen_bind.bind_flag("--no-stop-on-eos", gen_opts.no_stop_on_eos, "Keep generating past EOS");

    FilterOpts filter_opts;
    CLI::App* filter_cmd =
        app.add_subcommand("filter-prompts", "Split prompts into harmless-eval / helpful-eval sets");
    OptionBinder filter_bind(filter_cmd);
    filter_bind.bind("--data", filter_opts.data, "JSONL file or directory of preference pairs");
    filter_bind.bind("--split", filter_opts.split, "Split name when --data is a directory");
    filter_bind.bind("--keywords", filter_opts.keywords, "Comma-separated harm keywords");
    filter_bind.bind("--n", filter_opts.n, "Prompts to sample per category (0 = all)");
    filter_bind.bind("--seed", filter_opts.seed, "Root seed");
    filter_bind.bind("--out", filter_opts.out, "Prompts JSON path to write");

    EvalOpts eval_opts;
    CLI::App* eval_cmd = app.add_subcommand("eval", "Generate, score, and report for a model matrix");
    OptionBinder eval_bind(eval_cmd);
    eval_bind.bind("--models", eval_opts.models,
                   "Comma-separated tag=checkpoint list; tag base is the improvement baseline");
    eval_bind.bind("--scorer", eval_opts.scorer, "lexical | file:<tsv> | remote:<url>");
    eval_bind.bind("--prompts", eval_opts.prompts, "Prompts JSON from filter-prompts");
    eval_bind.bind("--out", eval_opts.out_dir, "Report directory to write");
    eval_bind.bind("--max-new-tokens", eval_opts.max_new_tokens, "Generation budget per prompt");
    eval_bind.bind("--harmful-below", eval_opts.harmful_below, "Harmful classification threshold");
    eval_bind.bind("--helpful-above", eval_opts.helpful_above, "Helpful classification threshold");
    eval_bind.bind("--seed", eval_opts.seed, "Root seed (recorded in the report)");

    ReportOpts report_opts;
    CLI::App* report_cmd = app.add_subcommand("report", "Rebuild report files from an audit log");
    OptionBinder report_bind(report_cmd);
    report_bind.bind("--audit", report_opts.audit, "Audit JSONL from a previous eval");
    report_bind.bind("--out", report_opts.out_dir, "Report directory to write");

    init_cmd->callback([&] { run_init(init_opts, init_bind.merge(), out); });
    sft_cmd->callback([&] { run_train_sft(sft_opts, sft_bind.merge(), out); });
    dpo_cmd->callback([&] { run_train_dpo(dpo_opts, dpo_bind.merge(), out); });
    gen_cmd->callback([&] { run_gen(gen_opts, gen_bind.merge(), out); });
    filter_cmd->callback([&] { run_filter_prompts(filter_opts, filter_bind.merge(), out); });
    eval_cmd->callback([&] { run_eval(eval_opts, eval_bind.merge(), out); });
    report_cmd->callback([&] { run_report(report_opts, report_bind.merge(), out); });

    const auto active_help = [&]() -> std::string {
        const auto subs = app.get_subcommands();
        return subs.empty() ? app.help() : subs.front()->help();
    };

    try {
        std::vector<std::string> reversed(args.rbegin(), args.rend());
        app.parse(std::move(reversed));
        return 0;
    } catch (const CLI::CallForHelp&) {
        out << active_help();
        return 0;
    } catch (const CLI::CallForAllHelp&) {
        out << app.help("", CLI::AppFormatMode::All);
        return 0;
    } catch (const CLI::ParseError& e) {
        err << "error: " << e.what() << "\n\n" << active_help();
        return 1;
    } catch (const UsageError& e) {
        err << "error: " << e.what() << "\n\n" << active_help();
        return 1;
    } catch (const Error& e) {
        err << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return 2;
    }
}

int run_cli(const std::vector<std::string>& args) { return run_cli(args, std::cout, std::cerr); }

}  // namespace alignkit
