#include "ccdbp/kernels.hpp"
#include "kernels/scalar_impl.hpp"

namespace ccdbp::kernels {

const KernelTable& scalar() {
  static const KernelTable table{
      "scalar",         &ref::intensity2, &ref::intensity, &ref::rotate,
      &ref::rotate2,    &ref::cmul,       &ref::cmul_acc,  &ref::correlate,
      &ref::sincos,
  };
  return table;
}

}  // namespace ccdbp::kernels
