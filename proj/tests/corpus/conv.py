from staircase import *

# Desk scale: a 64x64 image stored with a K-1 halo, three 3x3 filters.
N, CI, CO, K = 1, 1, 3, 3
HO, WO = 64, 64
HI, WI = HO + K - 1, WO + K - 1


@mlir_func(range_ctor=scf_for)
def conv2d_nchw_fchw(
    input: MemRef[(N, CI, HI, WI), F32],
    kernel: MemRef[(CO, CI, K, K), F32],
    output: MemRef[(N, CO, HO, WO), F32],
):
    for n, co, ho, wo in parallel((0, 0, 0, 0), (N, CO, HO, WO)):
        for ci in range(0, CI):
            for ki in range(0, K):
                for kj in range(0, K):
                    ii = ho + ki
                    jj = wo + kj
                    inp = input[n, ci, ii, jj]
                    ker = kernel[co, ci, ki, kj]
                    output[n, co, ho, wo] += inp * ker


@mlir_func(range_ctor=scf_for)
def conv2d_i32(
    input: MemRef[(N, CI, HI, WI), I32],
    kernel: MemRef[(CO, CI, K, K), I32],
    output: MemRef[(N, CO, HO, WO), I32],
):
    for n, co, ho, wo in parallel((0, 0, 0, 0), (N, CO, HO, WO)):
        for ci in range(0, CI):
            for ki in range(0, K):
                for kj in range(0, K):
                    inp = input[n, ci, ho + ki, wo + kj]
                    ker = kernel[co, ci, ki, kj]
                    output[n, co, ho, wo] += inp * ker
