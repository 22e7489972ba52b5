#include "skipmid/data.hpp"

#include <cmath>
#include <fstream>

#include "skipmid/binio.hpp"
#include "skipmid/errors.hpp"

namespace skipmid {

namespace {

constexpr char kTokenMagic[6] = {'S', 'K', 'T', 'O', 'K', '1'};

}  // namespace

TokenFile tokenize_bytes(const std::vector<std::uint8_t>& text) {
  TokenFile file;
  file.vocab_size = 256;
  file.tokens.reserve(text.size());
  for (std::uint8_t b : text) file.tokens.push_back(static_cast<std::uint16_t>(b));
  return file;
}

std::vector<std::uint8_t> detokenize_bytes(const TokenFile& file) {
  if (file.vocab_size > 256) {
    throw ContractError("detokenize_bytes: vocabulary exceeds byte range");
  }
  std::vector<std::uint8_t> text;
  text.reserve(file.tokens.size());
  for (std::uint16_t t : file.tokens) text.push_back(static_cast<std::uint8_t>(t));
  return text;
}

void save_tokens(const TokenFile& file, const std::string& path) {
  if (file.vocab_size <= 0 || file.vocab_size > 65536) {
    throw ContractError("save_tokens: vocab_size must be in [1, 65536]");
  }
  for (std::uint16_t t : file.tokens) {
    if (t >= file.vocab_size) {
      throw ContractError("save_tokens: token " + std::to_string(t) + " >= vocab_size");
    }
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open '" + path + "' for writing");
  write_bytes(out, kTokenMagic, sizeof(kTokenMagic));
  write_u32(out, static_cast<std::uint32_t>(file.vocab_size));
  write_u64(out, static_cast<std::uint64_t>(file.tokens.size()));
  if (!file.tokens.empty()) {
    write_bytes(out, reinterpret_cast<const char*>(file.tokens.data()),
                       file.tokens.size() * sizeof(std::uint16_t));
  }
  if (!out) throw IoError("write failed for '" + path + "'");
}

TokenFile load_tokens(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path + "'");
  char magic[sizeof(kTokenMagic)];
  read_bytes(in, magic, sizeof(magic), "token file magic");
  for (std::size_t i = 0; i < sizeof(magic); ++i) {
    if (magic[i] != kTokenMagic[i]) throw IoError("'" + path + "' is not a token file");
  }
  TokenFile file;
  file.vocab_size = static_cast<std::int64_t>(read_u32(in, "vocab_size"));
  if (file.vocab_size <= 0 || file.vocab_size > 65536) {
    throw IoError("token file vocab_size out of range");
  }
  const std::uint64_t count = read_u64(in, "token count");
  file.tokens.resize(count);
  if (count > 0) {
    read_bytes(in, reinterpret_cast<char*>(file.tokens.data()),
                      count * sizeof(std::uint16_t), "token payload");
  }
  for (std::uint16_t t : file.tokens) {
    if (t >= file.vocab_size) {
      throw IoError("token file contains token " + std::to_string(t) + " >= vocab_size");
    }
  }
  return file;
}

std::vector<std::uint8_t> read_binary_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path + "'");
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                  std::istreambuf_iterator<char>());
  return bytes;
}

void write_binary_file(const std::string& path, const std::vector<std::uint8_t>& bytes) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open '" + path + "' for writing");
  if (!bytes.empty()) {
    out.write(reinterpret_cast<const char*>(bytes.data()),
              static_cast<std::streamsize>(bytes.size()));
  }
  if (!out) throw IoError("write failed for '" + path + "'");
}

TokenRange train_range(std::int64_t token_count, double val_fraction) {
  if (val_fraction < 0.0 || val_fraction >= 1.0) {
    throw ContractError("val_fraction must be in [0, 1)");
  }
  const std::int64_t held_out =
      static_cast<std::int64_t>(std::floor(static_cast<double>(token_count) * val_fraction));
  return TokenRange{0, token_count - held_out};
}

TokenRange val_range(std::int64_t token_count, double val_fraction) {
  return TokenRange{train_range(token_count, val_fraction).end, token_count};
}

Batch sample_batch(const TokenFile& file, TokenRange range, std::int64_t batch_size,
                   std::int64_t seq_len, std::uint64_t key, std::uint64_t step) {
  if (batch_size <= 0 || seq_len <= 0) {
    throw ContractError("sample_batch: batch_size and seq_len must be positive");
  }
  if (range.begin < 0 || range.end > static_cast<std::int64_t>(file.tokens.size()) ||
      range.begin > range.end) {
    throw ContractError("sample_batch: range outside corpus");
  }
  const std::int64_t window = seq_len + 1;
  if (range.size() < window) {
    throw ContractError("sample_batch: corpus range has " + std::to_string(range.size()) +
                        " tokens, need at least " + std::to_string(window));
  }
  const std::uint64_t slots = static_cast<std::uint64_t>(range.size() - window + 1);
  Batch batch;
  batch.inputs.resize(static_cast<std::size_t>(batch_size));
  batch.targets.resize(static_cast<std::size_t>(batch_size));
  for (std::int64_t b = 0; b < batch_size; ++b) {
    const std::uint64_t counter = step * static_cast<std::uint64_t>(batch_size) +
                                  static_cast<std::uint64_t>(b);
    const std::int64_t offset =
        range.begin + static_cast<std::int64_t>(Rng::below_at(key, counter, slots));
    auto& inputs = batch.inputs[static_cast<std::size_t>(b)];
    auto& targets = batch.targets[static_cast<std::size_t>(b)];
    inputs.reserve(static_cast<std::size_t>(seq_len));
    targets.reserve(static_cast<std::size_t>(seq_len));
    for (std::int64_t i = 0; i < seq_len; ++i) {
      inputs.push_back(static_cast<std::int64_t>(file.tokens[static_cast<std::size_t>(offset + i)]));
      targets.push_back(
          static_cast<std::int64_t>(file.tokens[static_cast<std::size_t>(offset + i + 1)]));
    }
  }
  return batch;
}

}  // namespace skipmid
