#pragma once

#include <cstdint>
#include <string>

#include "alignkit/model.h"

namespace alignkit {

/// How a checkpoint came to be. The method tag drives downstream rules such
/// as "sft then dpo yields sft+dpo".
struct Provenance {
    std::string method = "base";  // base | sft | dpo | sft+dpo
    int64_t epochs = 0;
    uint64_t seed = 0;

    void validate() const;  // ConfigError on an unknown method or negative epochs
};

struct ModelCheckpoint {
    TransformerModel model;
    Provenance provenance;
};

/// Binary layout: magic "ALCK", u32 LE version (=1), u64 LE header length,
/// UTF-8 JSON header (config, provenance, lora, tensor manifest with name /
/// dtype / shape / offset / length), then the raw little-endian tensor
/// payloads concatenated in manifest order. Offsets are relative to the start
/// of the payload region. Saving the same model twice yields identical bytes.
void save_checkpoint(const TransformerModel& model, const std::string& path,
                     const Provenance& provenance);

/// Validates magic, version, manifest consistency and exact file size; any
/// violation raises FormatError naming the offending field. Never returns a
/// partially filled model.
ModelCheckpoint load_checkpoint(const std::string& path);

}  // namespace alignkit
