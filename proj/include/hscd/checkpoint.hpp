#pragma once

#include <string>

#include "hscd/cd_head.hpp"
#include "hscd/contrastive.hpp"
#include "hscd/predictor.hpp"
#include "hscd/scene.hpp"

namespace hscd {

// Versioned checkpoint containers: a directory with a text manifest (kind,
// config fields, ordered parameter table) and one raw little-endian float64
// file holding every parameter in registration order. Loading rebuilds the
// network layout from the manifest config, verifies the parameter table
// against it entry by entry, and restores values bit-exactly.
void save_predictor(const PredictorState& st, const std::string& path);
PredictorState load_predictor(const std::string& path);

void save_encoder(const EncoderState& st, const std::string& path);
EncoderState load_encoder(const std::string& path);

void save_head(const HeadState& st, const std::string& path);
HeadState load_head(const std::string& path);

// Change maps persist as a manifest plus raw u8 (H, W) decisions.
void save_change_map(const ChangeMap& map, const std::string& path);
ChangeMap load_change_map(const std::string& path);

}  // namespace hscd
