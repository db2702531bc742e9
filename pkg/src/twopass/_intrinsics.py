"""Low-level numba intrinsics: binary32 FMA, bit casts, cycle counter, cache flush.

These lower directly to LLVM instructions so that kernels using them stay
vectorizable. ``fma32`` is the IEEE fused multiply-add (single rounding); on
targets without hardware FMA LLVM falls back to ``fmaf``.
"""

from llvmlite import ir
from numba import types
from numba.core import cgutils
from numba.extending import intrinsic


@intrinsic
def fma32(typingctx, a, b, c):
    sig = types.float32(types.float32, types.float32, types.float32)

    def codegen(context, builder, signature, args):
        return builder.fma(*args)

    return sig, codegen


@intrinsic
def bits_to_f32(typingctx, x):
    sig = types.float32(types.int32)

    def codegen(context, builder, signature, args):
        return builder.bitcast(args[0], ir.FloatType())

    return sig, codegen


@intrinsic
def f32_to_bits(typingctx, x):
    sig = types.int32(types.float32)

    def codegen(context, builder, signature, args):
        return builder.bitcast(args[0], ir.IntType(32))

    return sig, codegen


@intrinsic
def read_cycle_counter(typingctx):
    sig = types.int64()

    def codegen(context, builder, signature, args):
        fnty = ir.FunctionType(ir.IntType(64), [])
        fn = cgutils.get_or_insert_function(builder.module, fnty, "llvm.readcyclecounter")
        return builder.call(fn, [])

    return sig, codegen


@intrinsic
def clflush_element(typingctx, arr, idx):
    """Flush the cache line holding ``arr[idx]`` (x86 only)."""
    sig = types.void(arr, types.intp)

    def codegen(context, builder, signature, args):
        aryty = signature.args[0]
        ary = context.make_array(aryty)(context, builder, args[0])
        ptr = cgutils.get_item_pointer(context, builder, aryty, ary, [args[1]])
        i8p = ir.IntType(8).as_pointer()
        fnty = ir.FunctionType(ir.VoidType(), [i8p])
        fn = cgutils.get_or_insert_function(builder.module, fnty, "llvm.x86.sse2.clflush")
        builder.call(fn, [builder.bitcast(ptr, i8p)])
        return context.get_dummy_value()

    return sig, codegen
