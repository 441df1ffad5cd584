#include "cvsync/sha256.hpp"

#include <openssl/evp.h>

#include <memory>

#include "cvsync/error.hpp"

namespace cvsync {

Sha256Digest sha256(ByteView data) {
  std::unique_ptr<EVP_MD_CTX, decltype(&EVP_MD_CTX_free)> ctx(EVP_MD_CTX_new(), &EVP_MD_CTX_free);
  Sha256Digest out{};
  unsigned int len = 0;
  if (!ctx || EVP_DigestInit_ex(ctx.get(), EVP_sha256(), nullptr) != 1 ||
      EVP_DigestUpdate(ctx.get(), data.data(), data.size()) != 1 ||
      EVP_DigestFinal_ex(ctx.get(), out.data(), &len) != 1 || len != out.size()) {
    throw Error(ErrorCode::io_error, "sha256 computation failed");
  }
  return out;
}

std::string digest_hex(const Sha256Digest& d) { return to_hex(d); }

}  // namespace cvsync
