from staircase import *

M, N, K = 4, 16, 8


@mlir_func(range_ctor=affine_for)
def matmul(
    A: MemRef[(M, N), F32],
    B: MemRef[(N, K), F32],
    C: MemRef[(M, K), F32],
):
    for i in range(M):
        for j in range(N):
            for k in range(K):
                a = A[i, j]
                b = B[j, k]
                c = C[i, k]
                d = a * b
                e = c + d
                C[i, k] = e


@mlir_func(range_ctor=affine_for)
def matmul_i32(
    A: MemRef[(M, N), I32],
    B: MemRef[(N, K), I32],
    C: MemRef[(M, K), I32],
):
    for i in range(M):
        for j in range(N):
            for k in range(K):
                C[i, k] += A[i, j] * B[j, k]
