#!/usr/bin/env python3
"""Independent SDPA-format solver used as a cross-check oracle.

Reads a sparse .dat-s file, solves it with an interior-point code from cvxpy
(Clarabel by default) and writes the result in the SDPA output layout:
objValPrimal, objValDual, phase.value, xVec, xMat, yMat.

SDPA primal:  min c^T x  s.t.  X = sum_i F_i x_i - F_0 >= 0
SDPA dual:    max <F_0, Y>  s.t.  <F_i, Y> = c_i,  Y >= 0
"""
import argparse
import sys

import numpy as np


def read_dats(path):
    with open(path) as fh:
        lines = [l.strip() for l in fh if l.strip() and l.strip()[0] not in '*"']
    clean = lambda s: s.replace(',', ' ').replace('{', ' ').replace('}', ' ').replace('(', ' ').replace(')', ' ')
    m = int(clean(lines[0]).split()[0])
    nb = int(clean(lines[1]).split()[0])
    sizes = [int(t) for t in clean(lines[2]).split()[:nb]]
    c = np.array([float(t) for t in clean(lines[3]).split()[:m]])
    F = [[np.zeros((abs(s), abs(s))) for s in sizes] for _ in range(m + 1)]
    for l in lines[4:]:
        t = clean(l).split()
        k, b, i, j, v = int(t[0]), int(t[1]) - 1, int(t[2]) - 1, int(t[3]) - 1, float(t[4])
        F[k][b][i, j] += v
        if i != j:
            F[k][b][j, i] += v
    return m, sizes, c, F


def fmt(v):
    return '%.17g' % v


def write_blocks(fh, name, blocks, sizes):
    fh.write('%s =\n{\n' % name)
    for B, s in zip(blocks, sizes):
        if s < 0:
            fh.write('{' + ','.join(fmt(v) for v in np.diag(B)) + '}\n')
        else:
            fh.write('{ ' + ', '.join('{' + ','.join(fmt(v) for v in row) + '}' for row in B) + ' }\n')
    fh.write('}\n')


SOLVER_OPTIONS = {
    'CLARABEL': {'max_iter': 1000, 'tol_gap_abs': 1e-10, 'tol_gap_rel': 1e-10, 'tol_feas': 1e-10},
    'CVXOPT': {'kktsolver': 'robust'},
}


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument('input')
    ap.add_argument('output')
    ap.add_argument('--solver', default='CLARABEL,CVXOPT',
                    help='comma separated solvers, tried in order until one reports optimal')
    args = ap.parse_args()
    import cvxpy as cp

    m, sizes, c, F = read_dats(args.input)
    # Dual problem in Y.
    Y = [cp.Variable((s, s), symmetric=True) if s > 0 else cp.Variable(-s) for s in sizes]

    def inner(Fb, Yb, s):
        return cp.trace(Fb @ Yb) if s > 0 else cp.sum(cp.multiply(np.diag(Fb), Yb))

    cons = [Yb >> 0 if s > 0 else Yb >= 0 for Yb, s in zip(Y, sizes)]
    for i in range(1, m + 1):
        cons.append(sum(inner(F[i][b], Y[b], s) for b, s in enumerate(sizes)) == c[i - 1])
    dual = cp.Problem(cp.Maximize(sum(inner(F[0][b], Y[b], s) for b, s in enumerate(sizes))), cons)
    # Primal problem in x.
    x = cp.Variable(m)
    Xs = []
    pcons = []
    for b, s in enumerate(sizes):
        expr = sum(F[i][b] * x[i - 1] for i in range(1, m + 1)) - F[0][b]
        if s > 0:
            pcons.append(expr >> 0)
        else:
            pcons.append(cp.diag(expr) >= 0)
        Xs.append(expr)
    primal = cp.Problem(cp.Minimize(c @ x), pcons)
    ok = False
    for solver in args.solver.split(','):
        opts = SOLVER_OPTIONS.get(solver, {})
        try:
            dual.solve(solver=solver, **opts)
            primal.solve(solver=solver, **opts)
        except Exception:  # solver crashes count as a failed attempt
            continue
        ok = dual.status == 'optimal' and primal.status == 'optimal'
        if ok:
            break
    if dual.status in ('infeasible', 'infeasible_inaccurate') or primal.status in ('unbounded', 'unbounded_inaccurate'):
        phase = 'pUNBD'
    elif primal.status in ('infeasible', 'infeasible_inaccurate') or dual.status in ('unbounded', 'unbounded_inaccurate'):
        phase = 'pINF_dUNBD'
    else:
        phase = 'pdOPT' if ok else 'noINFO'
    with open(args.output, 'w', newline='\n') as fh:
        fh.write('phase.value = %s\n' % phase)
        if phase != 'pdOPT':
            fh.write('objValPrimal = 0\nobjValDual = 0\n')
            return 0
        fh.write('objValPrimal = %s\n' % fmt(primal.value))
        fh.write('objValDual = %s\n' % fmt(dual.value))
        fh.write('xVec =\n{' + ','.join(fmt(v) for v in x.value) + '}\n')
        write_blocks(fh, 'xMat', [np.asarray(e.value) for e in Xs], sizes)
        write_blocks(fh, 'yMat', [np.asarray(Yb.value) if s > 0 else np.diag(Yb.value) for Yb, s in zip(Y, sizes)], sizes)
    return 0


if __name__ == '__main__':
    sys.exit(main())
