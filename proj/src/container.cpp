#include "okp/container.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

namespace okp {

namespace {

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v)
{
    for (int i = 0; i < 4; ++i) {
        out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
    }
}

std::uint32_t get_u32(std::span<const std::uint8_t> bytes, std::size_t at)
{
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) {
        v |= static_cast<std::uint32_t>(bytes[at + i]) << (8 * i);
    }
    return v;
}

std::string magic_name(std::string_view magic)
{
    return std::string(magic);
}

} // namespace

std::vector<std::uint8_t> encode_container(std::string_view magic, nlohmann::json header,
                                           const std::vector<NamedBuffer>& buffers)
{
    auto listing = nlohmann::json::array();
    for (const auto& b : buffers) {
        if (b.data.size() != shape_volume(b.shape)) {
            throw ShapeError("buffer '" + b.name + "' length does not match its shape " + shape_to_string(b.shape));
        }
        listing.push_back({{"name", b.name}, {"shape", b.shape}, {"bytes", b.data.size() * sizeof(float)}});
    }
    header["buffers"] = std::move(listing);
    const std::string text = header.dump();

    std::vector<std::uint8_t> out(magic.begin(), magic.end());
    out.push_back(kContainerVersion);
    put_u32(out, static_cast<std::uint32_t>(text.size()));
    out.insert(out.end(), text.begin(), text.end());
    for (const auto& b : buffers) {
        for (float f : b.data) {
            put_u32(out, std::bit_cast<std::uint32_t>(f));
        }
    }
    return out;
}

DecodedContainer decode_container(std::string_view magic, std::span<const std::uint8_t> bytes)
{
    using Kind = FormatError::Kind;
    const std::size_t prefix = magic.size() + 1 + 4;
    if (bytes.size() < magic.size()
        || std::memcmp(bytes.data(), magic.data(), magic.size()) != 0) {
        throw FormatError(Kind::bad_magic, "bad magic: expected '" + magic_name(magic) + "'");
    }
    if (bytes.size() < prefix) {
        throw FormatError(Kind::truncated, "truncated container: missing version/header length");
    }
    const std::uint8_t version = bytes[magic.size()];
    if (version != kContainerVersion) {
        throw FormatError(Kind::version_mismatch, "unsupported container version " + std::to_string(version)
                                                      + ", expected " + std::to_string(kContainerVersion));
    }
    const std::size_t header_len = get_u32(bytes, magic.size() + 1);
    if (bytes.size() < prefix + header_len) {
        throw FormatError(Kind::truncated, "truncated container: header declares " + std::to_string(header_len)
                                               + " bytes, only " + std::to_string(bytes.size() - prefix)
                                               + " available");
    }

    DecodedContainer out;
    const auto* hbegin = reinterpret_cast<const char*>(bytes.data() + prefix);
    try {
        out.header = nlohmann::json::parse(hbegin, hbegin + header_len);
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(Kind::bad_header, std::string("header is not valid JSON: ") + e.what());
    }
    if (!out.header.is_object() || !out.header.contains("buffers") || !out.header["buffers"].is_array()) {
        throw FormatError(Kind::bad_header, "header lacks a 'buffers' array");
    }

    std::size_t declared = 0;
    for (const auto& entry : out.header["buffers"]) {
        try {
            DecodedBuffer b;
            b.name = entry.at("name").get<std::string>();
            b.shape = entry.at("shape").get<Shape>();
            const auto nbytes = entry.at("bytes").get<std::size_t>();
            if (nbytes != shape_volume(b.shape) * sizeof(float)) {
                throw FormatError(Kind::length_mismatch, "buffer '" + b.name + "' declares " + std::to_string(nbytes)
                                                             + " bytes but shape " + shape_to_string(b.shape)
                                                             + " needs " + std::to_string(shape_volume(b.shape) * 4));
            }
            declared += nbytes;
            out.buffers.push_back(std::move(b));
        } catch (const nlohmann::json::exception& e) {
            throw FormatError(Kind::bad_header, std::string("malformed buffer entry: ") + e.what());
        }
    }
    const std::size_t remainder = bytes.size() - prefix - header_len;
    if (remainder < declared) {
        throw FormatError(Kind::truncated, "truncated payload: header declares " + std::to_string(declared)
                                               + " buffer bytes, file holds " + std::to_string(remainder));
    }
    if (remainder != declared) {
        throw FormatError(Kind::length_mismatch, "payload length mismatch: header declares "
                                                     + std::to_string(declared) + " buffer bytes, file holds "
                                                     + std::to_string(remainder));
    }

    std::size_t at = prefix + header_len;
    for (auto& b : out.buffers) {
        b.data.resize(shape_volume(b.shape));
        for (auto& f : b.data) {
            f = std::bit_cast<float>(get_u32(bytes, at));
            at += 4;
        }
    }
    return out;
}

std::vector<std::uint8_t> read_file(const std::filesystem::path& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw IoError("cannot open '" + path.string() + "' for reading");
    }
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    if (in.bad()) {
        throw IoError("read failure on '" + path.string() + "'");
    }
    return bytes;
}

void write_file(const std::filesystem::path& path, std::span<const std::uint8_t> bytes)
{
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) {
        throw IoError("cannot open '" + path.string() + "' for writing");
    }
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) {
        throw IoError("write failure on '" + path.string() + "'");
    }
}

} // namespace okp
