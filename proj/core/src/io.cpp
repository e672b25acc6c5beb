#include "valsteer/io.hpp"

#include <cstring>
#include <fstream>
#include <sstream>

#include "valsteer/error.hpp"

namespace valsteer {

std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_file(const std::filesystem::path& path, const std::string& content) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + path.string());
    out << content;
    if (!out) throw IoError("short write to " + path.string());
}

std::vector<json> read_jsonl(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path.string());
    std::vector<json> out;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        try {
            out.push_back(json::parse(line));
        } catch (const json::exception& e) {
            throw ValidationError(path.string() + ":" + std::to_string(lineno) +
                                  ": bad JSON line: " + e.what());
        }
    }
    return out;
}

void write_jsonl(const std::filesystem::path& path, const std::vector<json>& records) {
    std::string buf;
    for (const json& r : records) {
        buf += r.dump();
        buf += '\n';
    }
    write_file(path, buf);
}

namespace {
constexpr char kB64Alphabet[] = "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";

int b64_value(char c) {
    if (c >= 'A' && c <= 'Z') return c - 'A';
    if (c >= 'a' && c <= 'z') return c - 'a' + 26;
    if (c >= '0' && c <= '9') return c - '0' + 52;
    if (c == '+') return 62;
    if (c == '/') return 63;
    return -1;
}
}  // namespace

std::string base64_encode(const std::vector<std::uint8_t>& bytes) {
    std::string out;
    out.reserve((bytes.size() + 2) / 3 * 4);
    std::size_t i = 0;
    while (i + 3 <= bytes.size()) {
        std::uint32_t v = (bytes[i] << 16) | (bytes[i + 1] << 8) | bytes[i + 2];
        out += kB64Alphabet[(v >> 18) & 63];
        out += kB64Alphabet[(v >> 12) & 63];
        out += kB64Alphabet[(v >> 6) & 63];
        out += kB64Alphabet[v & 63];
        i += 3;
    }
    const std::size_t rest = bytes.size() - i;
    if (rest == 1) {
        std::uint32_t v = bytes[i] << 16;
        out += kB64Alphabet[(v >> 18) & 63];
        out += kB64Alphabet[(v >> 12) & 63];
        out += "==";
    } else if (rest == 2) {
        std::uint32_t v = (bytes[i] << 16) | (bytes[i + 1] << 8);
        out += kB64Alphabet[(v >> 18) & 63];
        out += kB64Alphabet[(v >> 12) & 63];
        out += kB64Alphabet[(v >> 6) & 63];
        out += '=';
    }
    return out;
}

std::vector<std::uint8_t> base64_decode(const std::string& text) {
    if (text.size() % 4 != 0) throw ValidationError("base64: length not a multiple of 4");
    std::vector<std::uint8_t> out;
    out.reserve(text.size() / 4 * 3);
    for (std::size_t i = 0; i < text.size(); i += 4) {
        int vals[4];
        int pad = 0;
        for (int j = 0; j < 4; ++j) {
            char c = text[i + j];
            if (c == '=') {
                vals[j] = 0;
                ++pad;
            } else {
                vals[j] = b64_value(c);
                if (vals[j] < 0 || pad > 0)
                    throw ValidationError("base64: invalid character");
            }
        }
        std::uint32_t v = (vals[0] << 18) | (vals[1] << 12) | (vals[2] << 6) | vals[3];
        out.push_back(std::uint8_t((v >> 16) & 0xff));
        if (pad < 2) out.push_back(std::uint8_t((v >> 8) & 0xff));
        if (pad < 1) out.push_back(std::uint8_t(v & 0xff));
    }
    return out;
}

std::vector<std::uint8_t> floats_to_le_bytes(const Vec& v) {
    std::vector<std::uint8_t> out;
    out.reserve(v.size() * 4);
    for (float f : v) {
        std::uint32_t bits;
        static_assert(sizeof(bits) == sizeof(f));
        std::memcpy(&bits, &f, 4);
        out.push_back(std::uint8_t(bits & 0xff));
        out.push_back(std::uint8_t((bits >> 8) & 0xff));
        out.push_back(std::uint8_t((bits >> 16) & 0xff));
        out.push_back(std::uint8_t((bits >> 24) & 0xff));
    }
    return out;
}

Vec floats_from_le_bytes(const std::vector<std::uint8_t>& bytes) {
    if (bytes.size() % 4 != 0) throw ValidationError("float blob: size not a multiple of 4");
    Vec out(bytes.size() / 4);
    for (std::size_t i = 0; i < out.size(); ++i) {
        std::uint32_t bits = std::uint32_t(bytes[4 * i]) |
                             (std::uint32_t(bytes[4 * i + 1]) << 8) |
                             (std::uint32_t(bytes[4 * i + 2]) << 16) |
                             (std::uint32_t(bytes[4 * i + 3]) << 24);
        float f;
        std::memcpy(&f, &bits, 4);
        out[i] = f;
    }
    return out;
}

}  // namespace valsteer
