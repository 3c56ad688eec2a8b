// SPDX-License-Identifier: Apache-2.0
/**
 * @file   checkpoint.hpp
 * @brief  Named-tensor checkpoint files.
 *
 * Layout (all integers little-endian):
 *
 *   "SBCKPT"            6 bytes magic
 *   u16 version         = 1
 *   u32 tensor_count
 *   per tensor:
 *     u16 name_len, name bytes (UTF-8)
 *     u8  ndim, ndim x u32 dims
 *     f64 payload, row-major, little-endian
 *   u32 metadata_len, metadata bytes: "key=value\n" lines (UTF-8)
 *
 * Encoder tensors are stored under "enc/", decoder under "dec/" and the
 * calibration head under "head/".
 */
#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "senscal/dataio/preprocess.hpp"
#include "senscal/sensbert/model.hpp"

namespace senscal::sensbert {

inline constexpr std::string_view kCheckpointMagic = "SBCKPT";
inline constexpr std::uint16_t kCheckpointVersion = 1;

struct NamedTensor {
  std::string name;
  std::vector<std::uint32_t> dims;
  std::vector<double> values;
};

struct Checkpoint {
  std::vector<NamedTensor> tensors;
  std::vector<std::pair<std::string, std::string>> metadata;

  const NamedTensor *find(std::string_view name) const;
  std::optional<std::string> meta(std::string_view key) const;
  /// Replaces an existing key or appends a new one.
  void set_meta(std::string key, std::string value);
  void add(std::string name, const Tensor &t);
};

std::string serialize_checkpoint(const Checkpoint &ckpt);
/// Throws FormatError on bad magic, unsupported version, truncation,
/// trailing bytes or malformed metadata.
Checkpoint deserialize_checkpoint(std::string_view bytes);

void save_checkpoint(const Checkpoint &ckpt, const std::string &path);
Checkpoint load_checkpoint(const std::string &path);

void add_encoder(Checkpoint &ckpt, const EncoderParams &enc);
void add_decoder(Checkpoint &ckpt, const DecoderParams &dec);
void add_standardizer(Checkpoint &ckpt,
                      const dataio::StandardizerStats &stats);

/// Rebuilds parameters from "enc/" tensors and encoder.* metadata. Throws
/// FormatError if a tensor is missing or its shape disagrees with the
/// configuration recorded in the metadata.
EncoderParams encoder_from_checkpoint(const Checkpoint &ckpt);
DecoderParams decoder_from_checkpoint(const Checkpoint &ckpt);
std::optional<dataio::StandardizerStats>
standardizer_from_checkpoint(const Checkpoint &ckpt);

/// Tensor with the stored values and shape; throws FormatError if the
/// stored shape differs from `expected`.
Tensor tensor_from_checkpoint(const Checkpoint &ckpt, const std::string &name,
                              const numcore::Shape &expected,
                              bool requires_grad = true);

/// Formats a double so that parsing it back yields the same value.
std::string format_exact(double v);
std::string join_doubles(const std::vector<double> &values);
std::vector<double> split_doubles(std::string_view text);

} // namespace senscal::sensbert
