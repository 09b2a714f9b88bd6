#include <math.h>
#include <stdio.h>
#include "ntubal.h"

#define CHECK(call)                                                        \
  do {                                                                     \
    NtStatus s_ = (call);                                                  \
    if (s_ != NT_STATUS_OK) {                                              \
      fprintf(stderr, "%s -> %d: %s\n", #call, (int)s_, nt_last_error()); \
      return 1;                                                            \
    }                                                                      \
  } while (0)

int main(void) {
  size_t shape[3] = {10, 10, 10};
  NtTensor *x = NULL, *mask = NULL, *xhat = NULL;
  CHECK(nt_gen_cp(shape, 3, 2, 7, 0, &x));

  double ones[1000];
  unsigned long long state = 12345;
  for (int i = 0; i < 1000; i++) {
    state = state * 6364136223846793005ULL + 1442695040888963407ULL;
    ones[i] = ((state >> 33) % 10 < 2) ? 0.0 : 1.0;
  }
  CHECK(nt_tensor_new(shape, 3, ones, &mask));

  size_t rank[3];
  CHECK(nt_n_tubal_rank(x, 0.01, rank, 3));
  if (rank[0] != 2 || rank[1] != 2 || rank[2] != 2) return 2;

  double alpha[3] = {1.0 / 3, 1.0 / 3, 1.0 / 3};
  double tau[3] = {10, 10, 10};
  NtSolveInfo info;
  CHECK(nt_lrtc_solve(x, mask, alpha, tau, 3, NULL, &xhat, &info));

  double a[1000], b[1000], num = 0, den = 0;
  CHECK(nt_tensor_copy_data(x, a, 1000));
  CHECK(nt_tensor_copy_data(xhat, b, 1000));
  for (int i = 0; i < 1000; i++) {
    num += (a[i] - b[i]) * (a[i] - b[i]);
    den += a[i] * a[i];
  }
  if (!(num / den < 1e-3)) return 3;

  if (nt_tensor_shape(x, rank, 2) != NT_STATUS_BUFFER_TOO_SMALL) return 4;
  if (nt_last_error() == NULL) return 5;

  nt_tensor_free(x);
  nt_tensor_free(mask);
  nt_tensor_free(xhat);
  printf("ok %zu\n", info.iterations);
  return 0;
}
