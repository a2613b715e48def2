#pragma once

#include "ocmp/model.hpp"

#include <string>

namespace ocmp {

// Checkpoint layout:
//   "OCMPv1\n" <header byte count> "\n" <JSON header> <f32 little-endian payload>
// The payload holds every parameter tensor in declaration order (body layers,
// then heads; weight before bias).
class CheckpointError : public Error {
   public:
    using Error::Error;
};

std::string serialize_checkpoint(const ModelGraph& m);
ModelGraph deserialize_checkpoint(const std::string& bytes);

void save_checkpoint(const ModelGraph& m, const std::string& path);
ModelGraph load_checkpoint(const std::string& path);

}  // namespace ocmp
