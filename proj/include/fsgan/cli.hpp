#pragma once

// Command-line front end: pretrain, adapt, eval, grid, ablate.
//
// Data arguments accept an image directory or a synthetic domain spec:
//   synth:source[:count[:seed]]    procedural source domain (defaults 5000, 0)
//   synth:target[:count[:seed]]    hue-rotated, striped target domain (defaults 10, 100)

#include "fsgan/config.hpp"
#include "fsgan/data.hpp"
#include "fsgan/metrics.hpp"

#include <filesystem>
#include <string>
#include <vector>

namespace fsgan {

int run_cli(int argc, const char* const* argv);
int run_cli(const std::vector<std::string>& args);

ImageDataset load_dataset(const std::string& spec, std::size_t resolution);

/// Config file (optional) followed by `key=value` overrides, in order.
TrainConfig resolve_config(const std::string& config_path, const std::vector<std::string>& overrides,
                           TrainConfig base = {});

enum class AblationAxis { mask_ratio, mask_layer, lambda };

AblationAxis parse_axis(const std::string& name);
std::string to_string(AblationAxis axis);
/// Values swept when `--values` is omitted; mask_layer covers every discriminator block.
std::vector<std::string> default_axis_values(AblationAxis axis, const TrainConfig& cfg);
void apply_axis_value(TrainConfig& cfg, AblationAxis axis, const std::string& value);

/// JSON text of an evaluation record.
std::string evaluation_json(const std::string& checkpoint, const DiversityReport& diversity, const FidReport& fid,
                            std::size_t n, std::uint64_t seed);

} // namespace fsgan
