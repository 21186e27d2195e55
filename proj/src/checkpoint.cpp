#include "alignkit/checkpoint.h"

#include <bit>
#include <cstring>
#include <fstream>
#include <map>

#include "alignkit/errors.h"
#include "json.hpp"

namespace alignkit {

namespace {

using nlohmann::json;

constexpr char kMagic[4] = {'A', 'L', 'C', 'K'};
constexpr uint32_t kVersion = 1;

void append_u32le(std::string& out, uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void append_u64le(std::string& out, uint64_t v) {
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

uint32_t read_u32le(const unsigned char* p) {
    uint32_t v = 0;
    for (int i = 3; i >= 0; --i) v = (v << 8) | p[i];
    return v;
}

uint64_t read_u64le(const unsigned char* p) {
    uint64_t v = 0;
    for (int i = 7; i >= 0; --i) v = (v << 8) | p[i];
    return v;
}

void append_tensor_payload(std::string& out, const Tensor& t) {
    if (t.dtype() == DType::F32) {
        for (float f : t.data<float>()) append_u32le(out, std::bit_cast<uint32_t>(f));
    } else {
        for (double d : t.data<double>()) append_u64le(out, std::bit_cast<uint64_t>(d));
    }
}

void read_tensor_payload(const unsigned char* p, const Tensor& t) {
    if (t.dtype() == DType::F32) {
        auto dst = t.mutable_data<float>();
        for (size_t i = 0; i < dst.size(); ++i) dst[i] = std::bit_cast<float>(read_u32le(p + 4 * i));
    } else {
        auto dst = t.mutable_data<double>();
        for (size_t i = 0; i < dst.size(); ++i)
            dst[i] = std::bit_cast<double>(read_u64le(p + 8 * i));
    }
}

json config_to_json(const ModelConfig& c) {
    return json{{"vocab_size", c.vocab_size}, {"d_model", c.d_model},
                {"n_layers", c.n_layers},     {"n_heads", c.n_heads},
                {"d_ff", c.d_ff},             {"max_seq_len", c.max_seq_len},
                {"pad_id", c.pad_id},         {"bos_id", c.bos_id},
                {"eos_id", c.eos_id}};
}

// Field access helpers: every absence or type mismatch names the field.
const json& require_field(const json& obj, const char* ctx, const char* key) {
    auto it = obj.find(key);
    if (it == obj.end()) {
        throw FormatError(std::string("checkpoint header: missing ") + ctx + "." + key);
    }
    return *it;
}

int64_t require_int(const json& obj, const char* ctx, const char* key) {
    const json& v = require_field(obj, ctx, key);
    if (!v.is_number_integer()) {
        throw FormatError(std::string("checkpoint header: ") + ctx + "." + key +
                          " must be an integer");
    }
    return v.get<int64_t>();
}

std::string require_string(const json& obj, const char* ctx, const char* key) {
    const json& v = require_field(obj, ctx, key);
    if (!v.is_string()) {
        throw FormatError(std::string("checkpoint header: ") + ctx + "." + key +
                          " must be a string");
    }
    return v.get<std::string>();
}

ModelConfig config_from_json(const json& j) {
    ModelConfig c;
    c.vocab_size = require_int(j, "config", "vocab_size");
    c.d_model = require_int(j, "config", "d_model");
    c.n_layers = require_int(j, "config", "n_layers");
    c.n_heads = require_int(j, "config", "n_heads");
    c.d_ff = require_int(j, "config", "d_ff");
    c.max_seq_len = require_int(j, "config", "max_seq_len");
    c.pad_id = static_cast<int>(require_int(j, "config", "pad_id"));
    c.bos_id = static_cast<int>(require_int(j, "config", "bos_id"));
    c.eos_id = static_cast<int>(require_int(j, "config", "eos_id"));
    return c;
}

}  // namespace

void Provenance::validate() const {
    if (method != "base" && method != "sft" && method != "dpo" && method != "sft+dpo") {
        throw ConfigError("provenance method must be base, sft, dpo or sft+dpo (got '" + method +
                          "')");
    }
    if (epochs < 0) throw ConfigError("provenance epochs must be non-negative");
}

void save_checkpoint(const TransformerModel& model, const std::string& path,
                     const Provenance& provenance) {
    provenance.validate();
    model.config.validate();

    auto params = model.named_params();
    json manifest = json::array();
    std::string payload;
    for (const auto& [name, tensor] : params) {
        const uint64_t length = static_cast<uint64_t>(tensor.numel()) * dtype_size(tensor.dtype());
        manifest.push_back(json{{"name", name},
                                {"dtype", dtype_name(tensor.dtype())},
                                {"shape", tensor.shape()},
                                {"offset", payload.size()},
                                {"length", length}});
        append_tensor_payload(payload, tensor);
    }

    json header{{"config", config_to_json(model.config)},
                {"provenance", json{{"method", provenance.method},
                                    {"epochs", provenance.epochs},
                                    {"seed", provenance.seed}}},
                {"lora", nullptr},
                {"tensors", manifest}};
    if (model.lora) {
        header["lora"] = json{{"rank", model.lora->config.rank},
                              {"alpha", model.lora->config.alpha},
                              {"targets", model.lora->config.targets}};
    }
    const std::string header_bytes = header.dump();

    std::string blob;
    blob.reserve(16 + header_bytes.size() + payload.size());
    blob.append(kMagic, 4);
    append_u32le(blob, kVersion);
    append_u64le(blob, header_bytes.size());
    blob += header_bytes;
    blob += payload;

    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open '" + path + "' for writing");
    out.write(blob.data(), static_cast<std::streamsize>(blob.size()));
    out.flush();
    if (!out) throw IoError("failed writing checkpoint to '" + path + "'");
}

ModelCheckpoint load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open checkpoint '" + path + "'");
    std::string blob((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    const auto* bytes = reinterpret_cast<const unsigned char*>(blob.data());

    if (blob.size() < 16) throw FormatError("checkpoint truncated before header");
    if (std::memcmp(blob.data(), kMagic, 4) != 0) throw FormatError("bad magic bytes");
    const uint32_t version = read_u32le(bytes + 4);
    if (version != kVersion) {
        throw FormatError("unsupported checkpoint version " + std::to_string(version));
    }
    const uint64_t header_len = read_u64le(bytes + 8);
    if (16 + header_len > blob.size()) throw FormatError("header length exceeds file size");

    json header;
    try {
        header = json::parse(blob.substr(16, header_len));
    } catch (const json::exception& e) {
        throw FormatError(std::string("header is not valid JSON: ") + e.what());
    }

    ModelConfig config = config_from_json(require_field(header, "header", "config"));
    config.validate();

    const json& prov_json = require_field(header, "header", "provenance");
    Provenance prov;
    prov.method = require_string(prov_json, "provenance", "method");
    prov.epochs = require_int(prov_json, "provenance", "epochs");
    const json& seed_json = require_field(prov_json, "provenance", "seed");
    if (!seed_json.is_number_integer() && !seed_json.is_number_unsigned()) {
        throw FormatError("checkpoint header: provenance.seed must be an integer");
    }
    prov.seed = seed_json.get<uint64_t>();
    try {
        prov.validate();
    } catch (const ConfigError& e) {
        throw FormatError(std::string("checkpoint header: ") + e.what());
    }

    const json& manifest = require_field(header, "header", "tensors");
    if (!manifest.is_array() || manifest.empty()) {
        throw FormatError("checkpoint header: tensors must be a non-empty array");
    }

    // Decode the manifest and check payload geometry before touching a model.
    struct Entry {
        std::string name;
        DType dtype;
        Shape shape;
        uint64_t offset, length;
    };
    std::vector<Entry> entries;
    DType model_dtype = DType::F32;
    uint64_t expected_offset = 0;
    for (const json& item : manifest) {
        Entry e;
        e.name = require_string(item, "tensors[]", "name");
        try {
            e.dtype = dtype_from_name(require_string(item, "tensors[]", "dtype"));
        } catch (const FormatError&) {
            throw FormatError("checkpoint header: tensor '" + e.name + "' has an unknown dtype");
        }
        const json& shape_json = require_field(item, "tensors[]", "shape");
        if (!shape_json.is_array() || shape_json.empty()) {
            throw FormatError("checkpoint header: tensor '" + e.name + "' shape must be an array");
        }
        for (const json& extent : shape_json) {
            if (!extent.is_number_integer() || extent.get<int64_t>() <= 0) {
                throw FormatError("checkpoint header: tensor '" + e.name +
                                  "' has a non-positive extent");
            }
            e.shape.push_back(extent.get<int64_t>());
        }
        e.offset = static_cast<uint64_t>(require_int(item, "tensors[]", "offset"));
        e.length = static_cast<uint64_t>(require_int(item, "tensors[]", "length"));
        const uint64_t expected_len =
            static_cast<uint64_t>(shape_numel(e.shape)) * dtype_size(e.dtype);
        if (e.length != expected_len) {
            throw FormatError("checkpoint header: tensor '" + e.name + "' length " +
                              std::to_string(e.length) + " does not match shape (expected " +
                              std::to_string(expected_len) + ")");
        }
        if (e.offset != expected_offset) {
            throw FormatError("checkpoint header: tensor '" + e.name +
                              "' offset breaks payload contiguity");
        }
        expected_offset += e.length;
        if (entries.empty()) {
            model_dtype = e.dtype;
        } else if (e.dtype != model_dtype) {
            throw FormatError("checkpoint header: tensor '" + e.name +
                              "' dtype differs from the rest of the model");
        }
        entries.push_back(std::move(e));
    }
    const uint64_t payload_start = 16 + header_len;
    if (payload_start + expected_offset != blob.size()) {
        throw FormatError("payload size mismatch: expected " + std::to_string(expected_offset) +
                          " bytes, file holds " + std::to_string(blob.size() - payload_start));
    }

    // Build the parameter frame, then fill every named tensor from its payload.
    ModelCheckpoint ckpt;
    ckpt.provenance = prov;
    ckpt.model = init_model(config, 0, model_dtype);
    const json& lora_json = require_field(header, "header", "lora");
    if (!lora_json.is_null()) {
        LoraConfig lc;
        lc.rank = require_int(lora_json, "lora", "rank");
        const json& alpha = require_field(lora_json, "lora", "alpha");
        if (!alpha.is_number()) throw FormatError("checkpoint header: lora.alpha must be a number");
        lc.alpha = alpha.get<double>();
        const json& targets = require_field(lora_json, "lora", "targets");
        if (!targets.is_array()) {
            throw FormatError("checkpoint header: lora.targets must be an array");
        }
        lc.targets.clear();
        for (const json& t : targets) {
            if (!t.is_string()) throw FormatError("checkpoint header: lora.targets must be strings");
            lc.targets.push_back(t.get<std::string>());
        }
        try {
            ckpt.model.attach_lora(lc, 0);
        } catch (const ConfigError& e) {
            throw FormatError(std::string("checkpoint header: ") + e.what());
        }
    }

    std::map<std::string, Entry*> by_name;
    for (Entry& e : entries) {
        if (!by_name.emplace(e.name, &e).second) {
            throw FormatError("checkpoint header: duplicate tensor '" + e.name + "'");
        }
    }
    for (auto& [name, tensor] : ckpt.model.named_params()) {
        auto it = by_name.find(name);
        if (it == by_name.end()) throw FormatError("checkpoint is missing tensor '" + name + "'");
        Entry* e = it->second;
        if (e->shape != tensor.shape()) {
            throw FormatError("checkpoint tensor '" + name + "' has shape " + shape_str(e->shape) +
                              ", model expects " + shape_str(tensor.shape()));
        }
        read_tensor_payload(bytes + payload_start + e->offset, tensor);
        by_name.erase(it);
    }
    if (!by_name.empty()) {
        throw FormatError("checkpoint contains unexpected tensor '" + by_name.begin()->first + "'");
    }
    return ckpt;
}

}  // namespace alignkit
