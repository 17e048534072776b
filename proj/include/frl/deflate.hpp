#pragma once

#include <cstdint>
#include <vector>

namespace frl {

// DEFLATE with the fixed Huffman tables and a greedy hash-chain matcher.
// When the fixed-Huffman stream comes out larger than simply storing the
// bytes, stored (uncompressed) blocks are emitted instead; that caps the cost
// of incompressible data at 8 bits/byte plus block headers. Compression
// parameters are pinned constants so the emitted bytes are stable across
// platforms and releases; that stability is what makes PNG code length
// usable as a score term.
std::vector<uint8_t> deflate(const std::vector<uint8_t>& raw);

uint32_t crc32(const uint8_t* data, size_t n, uint32_t seed = 0);
uint32_t adler32(const uint8_t* data, size_t n);

}  // namespace frl
