// Copyright 2026 The ast Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "ast/wav_io.h"

#include <cstring>
#include <fstream>

namespace ast {

namespace {

void put_u32(std::ofstream& f, uint32_t v) {
  char b[4] = {static_cast<char>(v & 0xff), static_cast<char>((v >> 8) & 0xff),
               static_cast<char>((v >> 16) & 0xff),
               static_cast<char>((v >> 24) & 0xff)};
  f.write(b, 4);
}

void put_u16(std::ofstream& f, uint16_t v) {
  char b[2] = {static_cast<char>(v & 0xff), static_cast<char>((v >> 8) & 0xff)};
  f.write(b, 2);
}

uint32_t get_u32(const unsigned char* p) {
  return static_cast<uint32_t>(p[0]) | (static_cast<uint32_t>(p[1]) << 8) |
         (static_cast<uint32_t>(p[2]) << 16) | (static_cast<uint32_t>(p[3]) << 24);
}

uint16_t get_u16(const unsigned char* p) {
  return static_cast<uint16_t>(p[0] | (p[1] << 8));
}

}  // namespace

void write_wav(const std::string& path, const Waveform& w) {
  std::ofstream f(path, std::ios::binary);
  require(f.good(), ErrorCategory::kIo, "cannot open for write: " + path);
  const uint32_t n = static_cast<uint32_t>(w.samples.size());
  const uint32_t data_bytes = n * 2;
  f.write("RIFF", 4);
  put_u32(f, 36 + data_bytes);
  f.write("WAVE", 4);
  f.write("fmt ", 4);
  put_u32(f, 16);
  put_u16(f, 1);  // PCM
  put_u16(f, 1);  // mono
  put_u32(f, static_cast<uint32_t>(w.sample_rate));
  put_u32(f, static_cast<uint32_t>(w.sample_rate) * 2);
  put_u16(f, 2);   // block align
  put_u16(f, 16);  // bits per sample
  f.write("data", 4);
  put_u32(f, data_bytes);
  for (float s : w.samples) {
    float x = std::min(std::max(s, -1.f), 1.f);
    const int16_t q = static_cast<int16_t>(std::lrintf(x * 32767.f));
    char b[2] = {static_cast<char>(q & 0xff), static_cast<char>((q >> 8) & 0xff)};
    f.write(b, 2);
  }
  require(f.good(), ErrorCategory::kIo, "write failed: " + path);
}

Waveform read_wav(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  require(f.good(), ErrorCategory::kIo, "cannot open: " + path);
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(f)),
                                   std::istreambuf_iterator<char>());
  require(bytes.size() >= 44 && !std::memcmp(bytes.data(), "RIFF", 4) &&
              !std::memcmp(bytes.data() + 8, "WAVE", 4),
          ErrorCategory::kInput, "not a RIFF/WAVE file: " + path);

  Waveform w;
  size_t pos = 12;
  bool got_fmt = false, got_data = false;
  while (pos + 8 <= bytes.size()) {
    const uint32_t chunk_size = get_u32(bytes.data() + pos + 4);
    if (!std::memcmp(bytes.data() + pos, "fmt ", 4)) {
      require(chunk_size >= 16, ErrorCategory::kInput, "bad fmt chunk");
      const unsigned char* p = bytes.data() + pos + 8;
      require(get_u16(p) == 1, ErrorCategory::kInput,
              "only PCM wav supported: " + path);
      require(get_u16(p + 2) == 1, ErrorCategory::kInput,
              "only mono wav supported: " + path);
      w.sample_rate = static_cast<int>(get_u32(p + 4));
      require(get_u16(p + 14) == 16, ErrorCategory::kInput,
              "only 16-bit wav supported: " + path);
      got_fmt = true;
    } else if (!std::memcmp(bytes.data() + pos, "data", 4)) {
      require(got_fmt, ErrorCategory::kInput, "data chunk before fmt");
      const size_t count = std::min<size_t>(chunk_size, bytes.size() - pos - 8) / 2;
      w.samples.resize(count);
      const unsigned char* p = bytes.data() + pos + 8;
      for (size_t i = 0; i < count; ++i) {
        const int16_t q =
            static_cast<int16_t>(get_u16(p + 2 * i));
        w.samples[i] = static_cast<float>(q) / 32767.f;
      }
      got_data = true;
      break;
    }
    pos += 8 + chunk_size + (chunk_size & 1);
  }
  require(got_data, ErrorCategory::kInput, "no data chunk in " + path);
  return w;
}

}  // namespace ast
