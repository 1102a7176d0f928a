#pragma once
// Single-file MachModel container. Layout (all little-endian) is documented in
// docs/model_format.md.

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <stdexcept>
#include <vector>

#include "mach/mach.hpp"

namespace mach {

inline constexpr char kModelMagic[8] = {'M', 'A', 'C', 'H', 'M', 'O', 'D', 'L'};
inline constexpr std::uint32_t kModelFormatVersion = 1;

class FormatError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Encodes the model to bytes exactly as save_model writes them.
std::vector<std::uint8_t> encode_model(const MachModel& mm);

// Writes to a temporary sibling file, then renames over `path`.
void save_model(const MachModel& mm, const std::filesystem::path& path);

// Loads and revalidates a model. With `subset`, only those sub-models are
// materialized (in the given order); the checksum still covers the whole file.
MachModel load_model(const std::filesystem::path& path,
                     const std::optional<std::vector<std::size_t>>& subset = std::nullopt);

// One line per prediction: "<label>" then " <label>:<score>" for each top-k entry.
void write_predictions(std::ostream& out, std::span<const Prediction> preds);

}  // namespace mach
