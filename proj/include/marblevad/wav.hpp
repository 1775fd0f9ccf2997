// Copyright (c) 2026 The marblevad Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// RIFF/WAVE reading and writing (little-endian PCM and IEEE float).

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <stdexcept>
#include <string>
#include <vector>

namespace marblevad {

inline constexpr int kSampleRate = 16000;

struct Waveform {
  std::vector<float> samples;
  int sample_rate = kSampleRate;

  std::size_t size() const { return samples.size(); }
  double duration_s() const {
    return static_cast<double>(samples.size()) / sample_rate;
  }
};

class AudioError : public std::runtime_error {
 public:
  enum class Kind {
    kMissingFile,
    kMalformedHeader,
    kUnsupportedCodec,
    kUnsupportedSampleRate,
    kWriteFailed,
  };

  AudioError(Kind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}

  Kind kind() const { return kind_; }

 private:
  Kind kind_;
};

enum class SampleFormat { kPcm16, kFloat32 };

namespace wav_detail {

inline std::uint32_t read_u32(const unsigned char* p) {
  return static_cast<std::uint32_t>(p[0]) |
         (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) |
         (static_cast<std::uint32_t>(p[3]) << 24);
}

inline std::uint16_t read_u16(const unsigned char* p) {
  return static_cast<std::uint16_t>(p[0] | (p[1] << 8));
}

inline void put_u32(std::vector<unsigned char>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back((v >> (8 * i)) & 0xFF);
}

inline void put_u16(std::vector<unsigned char>& out, std::uint16_t v) {
  out.push_back(v & 0xFF);
  out.push_back((v >> 8) & 0xFF);
}

constexpr std::uint16_t kFormatPcm = 1;
constexpr std::uint16_t kFormatFloat = 3;
constexpr std::uint16_t kFormatExtensible = 0xFFFE;

// Decodes one sample at `p` to [-1, 1].
inline double decode_sample(const unsigned char* p, std::uint16_t format,
                            int bits) {
  if (format == kFormatFloat) {
    if (bits == 32) {
      float f;
      std::memcpy(&f, p, 4);
      return f;
    }
    double d;
    std::memcpy(&d, p, 8);
    return d;
  }
  switch (bits) {
    case 8:
      return (static_cast<int>(p[0]) - 128) / 128.0;
    case 16:
      return static_cast<std::int16_t>(read_u16(p)) / 32768.0;
    case 24: {
      std::int32_t v = p[0] | (p[1] << 8) | (p[2] << 16);
      if (v & 0x800000) v -= 0x1000000;
      return v / 8388608.0;
    }
    case 32:
      return static_cast<std::int32_t>(read_u32(p)) / 2147483648.0;
    default:
      return 0.0;
  }
}

}  // namespace wav_detail

// Parses an in-memory RIFF/WAVE image. Multichannel input is averaged to mono.
inline Waveform parse_wav(const std::vector<unsigned char>& bytes,
                          const std::string& name = "<memory>") {
  using namespace wav_detail;
  const auto malformed = [&](const std::string& why) {
    return AudioError(AudioError::Kind::kMalformedHeader,
                      name + ": malformed RIFF/WAVE: " + why);
  };
  if (bytes.size() < 12 || std::memcmp(bytes.data(), "RIFF", 4) != 0 ||
      std::memcmp(bytes.data() + 8, "WAVE", 4) != 0) {
    throw malformed("missing RIFF/WAVE signature");
  }

  bool have_fmt = false;
  std::uint16_t format = 0, channels = 0, bits = 0;
  std::uint32_t rate = 0;
  const unsigned char* data = nullptr;
  std::size_t data_len = 0;

  std::size_t pos = 12;
  while (pos + 8 <= bytes.size()) {
    const unsigned char* chunk = bytes.data() + pos;
    std::uint32_t len = read_u32(chunk + 4);
    std::size_t body = pos + 8;
    if (std::memcmp(chunk, "fmt ", 4) == 0) {
      if (len < 16 || body + len > bytes.size()) throw malformed("short fmt chunk");
      format = read_u16(bytes.data() + body);
      channels = read_u16(bytes.data() + body + 2);
      rate = read_u32(bytes.data() + body + 4);
      bits = read_u16(bytes.data() + body + 14);
      if (format == kFormatExtensible) {
        if (len < 40) throw malformed("short WAVE_FORMAT_EXTENSIBLE chunk");
        // First two bytes of the SubFormat GUID carry the actual tag.
        format = read_u16(bytes.data() + body + 24);
      }
      have_fmt = true;
    } else if (std::memcmp(chunk, "data", 4) == 0) {
      data = bytes.data() + body;
      // Tolerate writers that leave the data length unfinalized.
      data_len = std::min<std::size_t>(len, bytes.size() - body);
    }
    pos = body + len + (len & 1);
  }

  if (!have_fmt) throw malformed("no fmt chunk");
  if (data == nullptr) throw malformed("no data chunk");
  if (channels == 0) throw malformed("zero channels");
  if (rate == 0) throw malformed("zero sample rate");

  const bool pcm_ok = format == kFormatPcm &&
                      (bits == 8 || bits == 16 || bits == 24 || bits == 32);
  const bool float_ok = format == kFormatFloat && (bits == 32 || bits == 64);
  if (!pcm_ok && !float_ok) {
    throw AudioError(AudioError::Kind::kUnsupportedCodec,
                     name + ": unsupported codec (format tag " +
                         std::to_string(format) + ", " + std::to_string(bits) +
                         " bits); only integer PCM and IEEE float are read");
  }

  const std::size_t frame_bytes = static_cast<std::size_t>(bits / 8) * channels;
  const std::size_t n = data_len / frame_bytes;
  if (n == 0) throw malformed("empty data chunk");

  Waveform w;
  w.sample_rate = static_cast<int>(rate);
  w.samples.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    double acc = 0.0;
    for (int c = 0; c < channels; ++c) {
      acc += decode_sample(data + i * frame_bytes + c * (bits / 8), format, bits);
    }
    double v = acc / channels;
    if (!std::isfinite(v)) throw malformed("non-finite sample");
    w.samples[i] = static_cast<float>(std::clamp(v, -1.0, 1.0));
  }
  return w;
}

inline Waveform load_wav(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw AudioError(AudioError::Kind::kMissingFile,
                     path.string() + ": cannot open audio file");
  }
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)),
                                   std::istreambuf_iterator<char>());
  return parse_wav(bytes, path.string());
}

inline std::vector<unsigned char> encode_wav(const Waveform& w,
                                             SampleFormat fmt = SampleFormat::kPcm16) {
  using namespace wav_detail;
  const std::uint16_t bits = fmt == SampleFormat::kPcm16 ? 16 : 32;
  const std::uint32_t data_len =
      static_cast<std::uint32_t>(w.samples.size() * (bits / 8));
  std::vector<unsigned char> out;
  out.reserve(44 + data_len);
  out.insert(out.end(), {'R', 'I', 'F', 'F'});
  put_u32(out, 36 + data_len);
  out.insert(out.end(), {'W', 'A', 'V', 'E', 'f', 'm', 't', ' '});
  put_u32(out, 16);
  put_u16(out, fmt == SampleFormat::kPcm16 ? kFormatPcm : kFormatFloat);
  put_u16(out, 1);
  put_u32(out, static_cast<std::uint32_t>(w.sample_rate));
  put_u32(out, static_cast<std::uint32_t>(w.sample_rate) * (bits / 8));
  put_u16(out, bits / 8);
  put_u16(out, bits);
  out.insert(out.end(), {'d', 'a', 't', 'a'});
  put_u32(out, data_len);
  for (float s : w.samples) {
    if (fmt == SampleFormat::kPcm16) {
      long q = std::lround(static_cast<double>(s) * 32768.0);
      q = std::clamp(q, -32768L, 32767L);
      put_u16(out, static_cast<std::uint16_t>(static_cast<std::int16_t>(q)));
    } else {
      std::uint32_t u;
      std::memcpy(&u, &s, 4);
      put_u32(out, u);
    }
  }
  return out;
}

inline void save_wav(const std::filesystem::path& path, const Waveform& w,
                     SampleFormat fmt = SampleFormat::kPcm16) {
  auto bytes = encode_wav(w, fmt);
  std::ofstream out(path, std::ios::binary);
  if (!out) {
    throw AudioError(AudioError::Kind::kWriteFailed,
                     path.string() + ": cannot open for writing");
  }
  out.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
  if (!out) {
    throw AudioError(AudioError::Kind::kWriteFailed,
                     path.string() + ": write failed");
  }
}

inline void require_sample_rate(const Waveform& w, const std::string& what,
                                int expected = kSampleRate) {
  if (w.sample_rate != expected) {
    throw AudioError(AudioError::Kind::kUnsupportedSampleRate,
                     what + ": sample rate " + std::to_string(w.sample_rate) +
                         " Hz is not supported; expected " +
                         std::to_string(expected) +
                         " Hz (input is not resampled)");
  }
}

}  // namespace marblevad
