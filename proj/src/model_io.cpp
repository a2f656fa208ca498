#include "hscnn/model_io.hpp"

#include "binary_io.hpp"

#include <array>
#include <filesystem>
#include <fstream>
#include <sstream>

namespace hscnn {

namespace detail {

std::uint32_t crc32(const char* data, std::size_t size)
{
    static const auto table = [] {
        std::array<std::uint32_t, 256> t{};
        for (std::uint32_t i = 0; i < 256; ++i) {
            std::uint32_t c = i;
            for (int k = 0; k < 8; ++k)
                c = (c & 1U) ? 0xEDB88320U ^ (c >> 1) : c >> 1;
            t[i] = c;
        }
        return t;
    }();
    std::uint32_t c = 0xFFFFFFFFU;
    for (std::size_t i = 0; i < size; ++i)
        c = table[(c ^ static_cast<unsigned char>(data[i])) & 0xFFU] ^ (c >> 8);
    return c ^ 0xFFFFFFFFU;
}

std::vector<char> read_file(const std::string& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw DataError("cannot open '" + path + "'");
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_file(const std::string& path, const std::vector<char>& bytes)
{
    const auto parent = std::filesystem::path(path).parent_path();
    if (!parent.empty())
        std::filesystem::create_directories(parent);
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out)
        throw DataError("cannot write '" + path + "'");
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out)
        throw DataError("write failed for '" + path + "'");
}

void write_text_file(const std::string& path, const std::string& text)
{
    write_file(path, std::vector<char>(text.begin(), text.end()));
}

std::string read_text_file(const std::string& path)
{
    auto bytes = read_file(path);
    return {bytes.begin(), bytes.end()};
}

} // namespace detail

namespace {
constexpr char kMagic[] = "HSCNNMDL";
constexpr std::size_t kMagicSize = 8;
} // namespace

void save_model(const Model<float>& model, const std::string& path)
{
    detail::ByteWriter w;
    w.put_raw(std::string(kMagic, kMagicSize));
    w.put(kModelFormatVersion);
    const std::size_t payload_start = w.bytes().size();

    w.put_string(model.config.canonical_text() + "seed=" + std::to_string(model.seed) + "\n");
    auto params = const_cast<Model<float>&>(model).parameters(true);
    w.put(static_cast<std::uint32_t>(params.size()));
    for (const auto& p : params) {
        w.put_string(p.name);
        w.put(static_cast<std::uint64_t>(p.values.size()));
        for (Index i = 0; i < p.values.size(); ++i)
            w.put_f32(p.values[i]);
    }
    const auto& bytes = w.bytes();
    w.put(detail::crc32(bytes.data() + payload_start, bytes.size() - payload_start));
    detail::write_file(path, w.bytes());
}

Model<float> load_model(const std::string& path, std::optional<Variant> expected)
{
    const auto bytes = detail::read_file(path);
    const std::string what = "model file '" + path + "'";
    detail::ByteReader r(bytes.data(), bytes.size(), what);
    if (r.get_raw(kMagicSize) != std::string(kMagic, kMagicSize))
        throw DataError(what + ": bad magic");
    const auto version = r.get<std::uint32_t>();
    if (version != kModelFormatVersion)
        throw DataError(what + ": format version " + std::to_string(version) + " is not supported (expected " +
                        std::to_string(kModelFormatVersion) + ")");
    const std::size_t payload_start = r.position();
    if (bytes.size() < payload_start + 4)
        throw DataError(what + ": truncated file");
    const std::size_t payload_end = bytes.size() - 4;
    detail::ByteReader tail(bytes.data() + payload_end, 4, what);
    if (tail.get<std::uint32_t>() != detail::crc32(bytes.data() + payload_start, payload_end - payload_start))
        throw DataError(what + ": checksum mismatch (file is corrupted or truncated)");

    detail::ByteReader body(bytes.data() + payload_start, payload_end - payload_start, what);
    std::string header = body.get_string();
    const auto seed_pos = header.rfind("seed=");
    if (seed_pos == std::string::npos)
        throw DataError(what + ": header lacks a seed");
    const std::uint64_t seed = std::stoull(header.substr(seed_pos + 5));
    const NetworkConfig config = NetworkConfig::parse_canonical(header.substr(0, seed_pos));
    if (expected && *expected != config.variant)
        throw DataError(what + ": variant mismatch, file holds a " + std::string(variant_name(config.variant)) +
                        " model but " + std::string(variant_name(*expected)) + " was requested");

    Model<float> model = build_model<float>(config, seed);
    auto params = model.parameters(true);
    const auto count = body.get<std::uint32_t>();
    if (count != params.size())
        throw DataError(what + ": tensor count does not match the architecture");
    for (auto& p : params) {
        const std::string name = body.get_string();
        if (name != p.name)
            throw DataError(what + ": expected tensor '" + p.name + "', found '" + name + "'");
        const auto n = body.get<std::uint64_t>();
        if (n != static_cast<std::uint64_t>(p.values.size()))
            throw DataError(what + ": tensor '" + name + "' has the wrong size");
        for (Index i = 0; i < p.values.size(); ++i)
            p.values[i] = body.get_f32();
    }
    if (body.remaining() != 0)
        throw DataError(what + ": trailing bytes after the last tensor");
    return model;
}

} // namespace hscnn
