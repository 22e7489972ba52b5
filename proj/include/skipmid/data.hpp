#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "skipmid/rng.hpp"

namespace skipmid {

// Tokenized corpus. On disk: magic "SKTOK1", u32 vocab_size, u64 token count,
// then little-endian u16 tokens. Every token is < vocab_size.
struct TokenFile {
  std::int64_t vocab_size = 0;
  std::vector<std::uint16_t> tokens;
};

// Identity byte-level tokenizer, vocabulary 256.
TokenFile tokenize_bytes(const std::vector<std::uint8_t>& text);
std::vector<std::uint8_t> detokenize_bytes(const TokenFile& file);

void save_tokens(const TokenFile& file, const std::string& path);
TokenFile load_tokens(const std::string& path);

std::vector<std::uint8_t> read_binary_file(const std::string& path);
void write_binary_file(const std::string& path, const std::vector<std::uint8_t>& bytes);

// Half-open token index range [begin, end).
struct TokenRange {
  std::int64_t begin = 0, end = 0;
  std::int64_t size() const { return end - begin; }
};

// Held-out split: validation is the last floor(count * val_fraction) tokens.
TokenRange train_range(std::int64_t token_count, double val_fraction);
TokenRange val_range(std::int64_t token_count, double val_fraction);

struct Batch {
  std::vector<std::vector<std::int64_t>> inputs;   // B sequences of length N
  std::vector<std::vector<std::int64_t>> targets;  // inputs shifted by one
};

// B windows of length N+1 at offsets drawn statelessly from `key` at counters
// step*B + b, entirely inside `range`. Deterministic in (key, step).
Batch sample_batch(const TokenFile& file, TokenRange range, std::int64_t batch_size,
                   std::int64_t seq_len, std::uint64_t key, std::uint64_t step);

}  // namespace skipmid
