// Copyright 2026 The fp8forge Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdio>
#include <string>
#include <string_view>

#include <openssl/sha.h>

namespace fp8forge::experiment {

// Object id git would assign to `content` as a blob:
// sha1("blob " + decimal length + '\0' + content), lowercase hex.
inline std::string git_blob_hash(std::string_view content) {
  std::string data = "blob " + std::to_string(content.size());
  data.push_back('\0');
  data.append(content);
  unsigned char digest[SHA_DIGEST_LENGTH];
  SHA1(reinterpret_cast<const unsigned char*>(data.data()), data.size(), digest);
  std::string hex;
  char buf[3];
  for (unsigned char b : digest) {
    std::snprintf(buf, sizeof(buf), "%02x", b);
    hex += buf;
  }
  return hex;
}

}  // namespace fp8forge::experiment
