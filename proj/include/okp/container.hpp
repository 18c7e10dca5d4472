#pragma once

// Shared binary container used by checkpoints ("OKPF") and dataset dumps ("OKDS"):
//
//   4-byte magic | u8 version (0x01) | u32 LE header length | UTF-8 JSON header |
//   raw little-endian f32 buffers, concatenated in header order
//
// The header's "buffers" array lists {name, shape, bytes} for every buffer.

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "okp/tensor.hpp"

namespace okp {

inline constexpr std::uint8_t kContainerVersion = 0x01;

struct NamedBuffer {
    std::string name;
    Shape shape;
    std::span<const float> data;
};

struct DecodedBuffer {
    std::string name;
    Shape shape;
    std::vector<float> data;
};

struct DecodedContainer {
    nlohmann::json header;
    std::vector<DecodedBuffer> buffers;
};

/// `header` must not already contain a "buffers" key; it is filled in here.
std::vector<std::uint8_t> encode_container(std::string_view magic, nlohmann::json header,
                                           const std::vector<NamedBuffer>& buffers);

DecodedContainer decode_container(std::string_view magic, std::span<const std::uint8_t> bytes);

std::vector<std::uint8_t> read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);

} // namespace okp
