#pragma once
#include <string>
#include <vector>

namespace ms {

struct Wav {
    std::vector<float> samples;  // mono
    int sample_rate = 0;
};

// RIFF/WAVE, 32-bit IEEE float, mono
void wav_write(const std::string& path, const float* samples, int64_t n, int sample_rate);
Wav wav_read(const std::string& path);

}  // namespace ms
