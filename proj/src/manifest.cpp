#include "fdareg/manifest.hpp"

#include <cstdio>
#include <fstream>
#include <stdexcept>
#include <vector>

#include <openssl/evp.h>

namespace fdareg {

std::string sha256_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw std::runtime_error("sha256_file: cannot open '" + path + "'");
  }
  EVP_MD_CTX* ctx = EVP_MD_CTX_new();
  if (ctx == nullptr || EVP_DigestInit_ex(ctx, EVP_sha256(), nullptr) != 1) {
    EVP_MD_CTX_free(ctx);
    throw std::runtime_error("sha256_file: digest init failed");
  }
  std::vector<char> buf(1 << 16);
  while (in) {
    in.read(buf.data(), static_cast<std::streamsize>(buf.size()));
    const std::streamsize got = in.gcount();
    if (got > 0 && EVP_DigestUpdate(ctx, buf.data(), static_cast<std::size_t>(got)) != 1) {
      EVP_MD_CTX_free(ctx);
      throw std::runtime_error("sha256_file: digest update failed");
    }
  }
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_DigestFinal_ex(ctx, digest, &len) != 1) {
    EVP_MD_CTX_free(ctx);
    throw std::runtime_error("sha256_file: digest final failed");
  }
  EVP_MD_CTX_free(ctx);

  std::string hex(2 * len, '0');
  for (unsigned int k = 0; k < len; ++k) {
    std::snprintf(hex.data() + 2 * k, 3, "%02x", digest[k]);
  }
  return hex;
}

}  // namespace fdareg
