#pragma once

#include <stdexcept>
#include <string>

namespace makesense {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

#define MAKESENSE_DEFINE_ERROR(Name, Base)      \
  class Name : public Base {                    \
   public:                                      \
    using Base::Base;                           \
  }

}  // namespace makesense
