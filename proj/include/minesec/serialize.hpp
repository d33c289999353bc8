#pragma once

#include <bit>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "minesec/net.hpp"

namespace minesec {

inline constexpr int kWeightFormatVersion = 1;

// Weight files are a self-describing text header (format version, module
// name, message/block sizes, layer shapes and activation tags) terminated by
// a "data" line, followed by the parameters as little-endian 64-bit floats
// in declaration order: embedding table, then per layer weight and bias.

namespace detail {

inline void write_f64_le(std::ostream& os, double d) {
  const std::uint64_t u = std::bit_cast<std::uint64_t>(d);
  char bytes[8];
  for (int i = 0; i < 8; ++i) bytes[i] = char((u >> (8 * i)) & 0xff);
  os.write(bytes, 8);
}

inline double read_f64_le(std::istream& is) {
  char bytes[8];
  is.read(bytes, 8);
  if (!is) throw std::runtime_error("weight file truncated");
  std::uint64_t u = 0;
  for (int i = 0; i < 8; ++i) u |= std::uint64_t(static_cast<unsigned char>(bytes[i])) << (8 * i);
  return std::bit_cast<double>(u);
}

}  // namespace detail

inline void save_weights(const std::filesystem::path& path, const DenseNet& net,
                         const std::string& module, std::size_t message_count,
                         std::size_t block_len) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("save_weights: cannot open " + path.string());
  os << "minesec-weights " << kWeightFormatVersion << "\n";
  os << "module " << module << "\n";
  os << "messages " << message_count << "\n";
  os << "block " << block_len << "\n";
  if (net.has_embedding())
    os << "embedding " << net.vocab_size() << " " << net.embed_dim() << "\n";
  else
    os << "embedding none\n";
  os << "layers " << net.layers().size() << "\n";
  for (const DenseNet::Layer& l : net.layers())
    os << "layer " << l.weight.rows << " " << l.weight.cols << " " << to_string(l.act) << "\n";
  os << "data\n";
  if (net.has_embedding())
    for (double v : net.embedding().data) detail::write_f64_le(os, v);
  for (const DenseNet::Layer& l : net.layers()) {
    for (double v : l.weight.data) detail::write_f64_le(os, v);
    for (double v : l.bias) detail::write_f64_le(os, v);
  }
  if (!os) throw std::runtime_error("save_weights: write failed for " + path.string());
}

inline DenseNet load_weights(const std::filesystem::path& path, std::string* module_out = nullptr,
                             std::size_t* messages_out = nullptr,
                             std::size_t* block_out = nullptr) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("load_weights: cannot open " + path.string());
  auto fail = [&](const std::string& why) -> std::runtime_error {
    return std::runtime_error("load_weights: " + path.string() + ": " + why);
  };

  std::string line, word;
  auto next_line = [&]() {
    if (!std::getline(is, line)) throw fail("unexpected end of header");
    return std::istringstream(line);
  };

  {
    auto ls = next_line();
    int version = -1;
    ls >> word >> version;
    if (word != "minesec-weights" || version != kWeightFormatVersion)
      throw fail("unsupported format line '" + line + "'");
  }
  std::string module;
  {
    auto ls = next_line();
    ls >> word >> module;
    if (word != "module" || module.empty()) throw fail("bad module line");
  }
  std::size_t messages = 0, block = 0;
  {
    auto ls = next_line();
    ls >> word >> messages;
    if (word != "messages") throw fail("bad messages line");
  }
  {
    auto ls = next_line();
    ls >> word >> block;
    if (word != "block") throw fail("bad block line");
  }
  bool has_embedding = false;
  std::size_t vocab = 0, embed_dim = 0;
  {
    auto ls = next_line();
    std::string v;
    ls >> word >> v;
    if (word != "embedding") throw fail("bad embedding line");
    if (v != "none") {
      has_embedding = true;
      vocab = std::stoull(v);
      if (!(ls >> embed_dim)) throw fail("bad embedding dims");
    }
  }
  std::size_t layer_count = 0;
  {
    auto ls = next_line();
    ls >> word >> layer_count;
    if (word != "layers" || layer_count == 0) throw fail("bad layers line");
  }
  std::vector<LayerSpec> specs;
  std::size_t input_width = 0;
  for (std::size_t i = 0; i < layer_count; ++i) {
    auto ls = next_line();
    std::size_t out = 0, in = 0;
    std::string act;
    ls >> word >> out >> in >> act;
    if (word != "layer" || out == 0 || in == 0) throw fail("bad layer line '" + line + "'");
    if (i == 0)
      input_width = in;
    else if (specs.back().width != in)
      throw fail("layer " + std::to_string(i) + " input " + std::to_string(in) +
                 " does not chain from previous width " + std::to_string(specs.back().width));
    specs.push_back({out, activation_from_string(act)});
  }
  if (has_embedding && embed_dim != input_width)
    throw fail("embedding dim does not match first layer input");
  {
    auto ls = next_line();
    ls >> word;
    if (word != "data") throw fail("missing data marker");
  }

  DenseNet net = has_embedding ? DenseNet::with_embedded_shape(vocab, embed_dim, specs)
                               : DenseNet::with_shape(input_width, specs);
  std::vector<double> flat(net.parameter_count());
  for (double& v : flat) v = detail::read_f64_le(is);
  char extra;
  if (is.read(&extra, 1))
    throw fail("trailing bytes after parameter data");
  net.set_flat_parameters(flat);

  if (module_out) *module_out = module;
  if (messages_out) *messages_out = messages;
  if (block_out) *block_out = block;
  return net;
}

}  // namespace minesec
