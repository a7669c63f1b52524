#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iterator>
#include <stdexcept>
#include <vector>

#include "clpc/audio.hpp"

namespace clpc {

namespace {

uint32_t u32le(const unsigned char* p) {
    return uint32_t(p[0]) | uint32_t(p[1]) << 8 | uint32_t(p[2]) << 16 | uint32_t(p[3]) << 24;
}

uint16_t u16le(const unsigned char* p) {
    return uint16_t(p[0]) | uint16_t(p[1]) << 8;
}

void put_u32le(std::vector<unsigned char>& out, uint32_t v) {
    out.push_back(v & 0xff);
    out.push_back((v >> 8) & 0xff);
    out.push_back((v >> 16) & 0xff);
    out.push_back((v >> 24) & 0xff);
}

void put_u16le(std::vector<unsigned char>& out, uint16_t v) {
    out.push_back(v & 0xff);
    out.push_back((v >> 8) & 0xff);
}

}  // namespace

AudioBuffer load_wav(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot open " + path);
    std::vector<unsigned char> data((std::istreambuf_iterator<char>(f)),
                                    std::istreambuf_iterator<char>());

    if (data.size() < 12 || std::memcmp(data.data(), "RIFF", 4) != 0 ||
        std::memcmp(data.data() + 8, "WAVE", 4) != 0)
        throw std::runtime_error("malformed header: " + path);

    int channels = 0, bits = 0, format = 0, rate = 0;
    const unsigned char* pcm = nullptr;
    size_t pcm_bytes = 0;

    size_t pos = 12;
    while (pos + 8 <= data.size()) {
        const char* id = reinterpret_cast<const char*>(data.data() + pos);
        const uint32_t size = u32le(data.data() + pos + 4);
        pos += 8;
        if (pos + size > data.size())
            throw std::runtime_error("malformed header: " + path);
        if (std::memcmp(id, "fmt ", 4) == 0) {
            if (size < 16) throw std::runtime_error("malformed header: " + path);
            format = u16le(data.data() + pos);
            channels = u16le(data.data() + pos + 2);
            rate = int(u32le(data.data() + pos + 4));
            bits = u16le(data.data() + pos + 14);
        } else if (std::memcmp(id, "data", 4) == 0) {
            pcm = data.data() + pos;
            pcm_bytes = size;
        }
        pos += size + (size & 1);  // chunks are word-aligned
    }

    if (channels == 0 || pcm == nullptr)
        throw std::runtime_error("malformed header: " + path);
    if (channels != 1)
        throw std::runtime_error("multichannel unsupported: " + path);
    if (format != 1 || bits != 16)
        throw std::runtime_error("unsupported format (need 16-bit PCM): " + path);
    if (rate <= 0)
        throw std::runtime_error("malformed header: " + path);

    AudioBuffer buf;
    buf.sample_rate = rate;
    const size_t n = pcm_bytes / 2;
    buf.samples.resize(n);
    for (size_t i = 0; i < n; ++i) {
        const int16_t s = int16_t(u16le(pcm + 2 * i));
        buf.samples[i] = double(s) / 32768.0;
    }
    return buf;
}

void save_wav(const AudioBuffer& buffer, const std::string& path) {
    if (buffer.sample_rate <= 0)
        throw std::runtime_error("invalid sample rate");

    const uint32_t n = uint32_t(buffer.samples.size());
    const uint32_t data_bytes = n * 2;

    std::vector<unsigned char> out;
    out.reserve(44 + data_bytes);
    out.insert(out.end(), {'R', 'I', 'F', 'F'});
    put_u32le(out, 36 + data_bytes);
    out.insert(out.end(), {'W', 'A', 'V', 'E'});
    out.insert(out.end(), {'f', 'm', 't', ' '});
    put_u32le(out, 16);
    put_u16le(out, 1);  // PCM
    put_u16le(out, 1);  // mono
    put_u32le(out, uint32_t(buffer.sample_rate));
    put_u32le(out, uint32_t(buffer.sample_rate) * 2);
    put_u16le(out, 2);
    put_u16le(out, 16);
    out.insert(out.end(), {'d', 'a', 't', 'a'});
    put_u32le(out, data_bytes);

    for (double x : buffer.samples) {
        long v = std::lround(x * 32768.0);
        if (v > 32767) v = 32767;
        if (v < -32768) v = -32768;
        put_u16le(out, uint16_t(int16_t(v)));
    }

    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw std::runtime_error("cannot write " + path);
    f.write(reinterpret_cast<const char*>(out.data()), std::streamsize(out.size()));
    if (!f) throw std::runtime_error("write failed: " + path);
}

}  // namespace clpc
