// Copyright 2026 The bqpe Authors
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

#pragma once

#include <array>
#include <cstdint>

namespace bqpe {

/// Philox4x32-10 block function.
inline std::array<std::uint32_t, 4> philox4x32(std::array<std::uint32_t, 4> ctr, std::array<std::uint32_t, 2> key) {
    constexpr std::uint32_t m0 = 0xD2511F53u;
    constexpr std::uint32_t m1 = 0xCD9E8D57u;
    constexpr std::uint32_t w0 = 0x9E3779B9u;
    constexpr std::uint32_t w1 = 0xBB67AE85u;
    for (int round = 0; round < 10; ++round) {
        if (round > 0) {
            key[0] += w0;
            key[1] += w1;
        }
        std::uint64_t p0 = static_cast<std::uint64_t>(m0) * ctr[0];
        std::uint64_t p1 = static_cast<std::uint64_t>(m1) * ctr[2];
        std::uint32_t hi0 = static_cast<std::uint32_t>(p0 >> 32);
        std::uint32_t lo0 = static_cast<std::uint32_t>(p0);
        std::uint32_t hi1 = static_cast<std::uint32_t>(p1 >> 32);
        std::uint32_t lo1 = static_cast<std::uint32_t>(p1);
        ctr = {hi1 ^ ctr[1] ^ key[0], lo1, hi0 ^ ctr[3] ^ key[1], lo0};
    }
    return ctr;
}

/// Counter-based stream. (seed, stream id) fully determines every draw, so a
/// trajectory gives the same outcomes on any worker.
class PhiloxStream {
   public:
    PhiloxStream(std::uint64_t seed, std::uint64_t stream_id)
        : key_{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32)},
          stream_{static_cast<std::uint32_t>(stream_id), static_cast<std::uint32_t>(stream_id >> 32)} {
    }

    std::uint32_t next_u32() {
        if (pos_ == 4) {
            block_ = philox4x32({stream_[0], stream_[1], static_cast<std::uint32_t>(counter_),
                                 static_cast<std::uint32_t>(counter_ >> 32)},
                                key_);
            ++counter_;
            pos_ = 0;
        }
        return block_[pos_++];
    }

    /// Uniform double in [0, 1) with 53 random bits.
    double uniform() {
        std::uint64_t hi = next_u32() >> 5;
        std::uint64_t lo = next_u32() >> 6;
        return (hi * 67108864.0 + lo) / 9007199254740992.0;
    }

   private:
    std::array<std::uint32_t, 2> key_;
    std::array<std::uint32_t, 2> stream_;
    std::uint64_t counter_ = 0;
    std::array<std::uint32_t, 4> block_{};
    int pos_ = 4;
};

}  // namespace bqpe
