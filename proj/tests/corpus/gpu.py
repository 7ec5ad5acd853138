from staircase import *

M, N, K = 4, 16, 8


class MyClass1(GPUModule):
    def kernel(
        self,
        A: MemRef[(M, N), F32],
        B: MemRef[(N, K), F32],
        C: MemRef[(M, K), F32],
    ):
        x = block_id_x()
        y = block_id_y()
        a = A[x, y]
        b = B[x, y]
        C[x, y] = a * b
        return


m = MyClass1(
    func_attributes={
        "spirv.entry_point_abi": spirv.entry_point_abi(workgroup_size=[1, 1, 1]),
    }
)


@mlir_func
def main(
    A: MemRef[(M, N), F32],
    B: MemRef[(N, K), F32],
    C: MemRef[(M, K), F32],
):
    m.kernel(A, B, C, grid_size=[4, 4, 1], block_size=[1, 1, 1])
