# cython: language_level=3, boundscheck=False, wraparound=False
"""Compiled kernels: seeded FNV-1a token hashing and sparse session overlap."""

import numpy as np
cimport numpy as cnp
from libc.stdint cimport uint64_t, int64_t

cnp.import_array()

cdef uint64_t FNV_OFFSET = 0xCBF29CE484222325ULL
cdef uint64_t FNV_PRIME = 0x100000001B3ULL


cdef inline uint64_t _seeded_basis(uint64_t seed):
    cdef uint64_t h = FNV_OFFSET
    cdef int i
    for i in range(8):
        h = (h ^ ((seed >> (8 * i)) & 0xFF)) * FNV_PRIME
    return h


def fnv1a64(bytes data, seed=0):
    cdef uint64_t h = _seeded_basis(<uint64_t>(seed & 0xFFFFFFFFFFFFFFFF))
    cdef const unsigned char[:] buf = data
    cdef Py_ssize_t i
    for i in range(buf.shape[0]):
        h = (h ^ buf[i]) * FNV_PRIME
    return h


def hash_tokens(tokens, seed=0):
    cdef uint64_t basis = _seeded_basis(<uint64_t>(seed & 0xFFFFFFFFFFFFFFFF))
    cdef Py_ssize_t n = len(tokens), k, i
    cdef cnp.ndarray[cnp.uint64_t, ndim=1] out = np.empty(n, dtype=np.uint64)
    cdef bytes raw
    cdef const unsigned char* p
    cdef Py_ssize_t m
    cdef uint64_t h
    for k in range(n):
        raw = tokens[k].encode("utf-8")
        p = raw
        m = len(raw)
        h = basis
        for i in range(m):
            h = (h ^ p[i]) * FNV_PRIME
        out[k] = h
    return out


def session_overlap(items, weights, indptr, indices, Py_ssize_t n_sessions):
    cdef int64_t[:] ip = np.ascontiguousarray(indptr, dtype=np.int64)
    cdef int64_t[:] ix = np.ascontiguousarray(indices, dtype=np.int64)
    cdef int64_t[:] it = np.ascontiguousarray(items, dtype=np.int64)
    cdef double[:] w = np.ascontiguousarray(weights, dtype=np.float64)
    out_arr = np.zeros(n_sessions)
    cdef double[:] out = out_arr
    cdef Py_ssize_t k, j, item
    for k in range(it.shape[0]):
        item = it[k]
        for j in range(ip[item], ip[item + 1]):
            out[ix[j]] += w[k]
    return out_arr


def posting_sums(items, indptr, indices, values):
    cdef int64_t[:] ip = np.ascontiguousarray(indptr, dtype=np.int64)
    cdef int64_t[:] ix = np.ascontiguousarray(indices, dtype=np.int64)
    cdef int64_t[:] it = np.ascontiguousarray(items, dtype=np.int64)
    cdef double[:] vals = np.ascontiguousarray(values, dtype=np.float64)
    out_arr = np.zeros(it.shape[0])
    cdef double[:] out = out_arr
    cdef Py_ssize_t k, j, item
    cdef double acc
    for k in range(it.shape[0]):
        item = it[k]
        acc = 0.0
        for j in range(ip[item], ip[item + 1]):
            acc += vals[ix[j]]
        out[k] = acc
    return out_arr
