"""Compiled inner loops for the coloured G-Wishart samplers.

Both samplers share the target ``a*log|K| - 0.5*theta.c`` with
``a = (delta-2)/2`` and ``c_r = tr(delta_r D)``. State arrays are updated
in place; randomness comes from the numpy Generator passed in.
"""
import math

import numba
import numpy as np

_JIT = dict(nopython=True, nogil=True, cache=True)

TARGET_ACCEPT = 0.3


@numba.jit(**_JIT)
def chol_logdet(K, L):
    """Cholesky into ``L`` (lower); returns log|K| or -inf if not PD."""
    p = K.shape[0]
    logdet = 0.0
    for j in range(p):
        s = K[j, j]
        for k in range(j):
            s -= L[j, k] * L[j, k]
        if not s > 0.0:
            return -np.inf
        d = math.sqrt(s)
        L[j, j] = d
        logdet += 2.0 * math.log(d)
        for i in range(j + 1, p):
            t = K[i, j]
            for k in range(j):
                t -= L[i, k] * L[j, k]
            L[i, j] = t / d
    return logdet


@numba.jit(**_JIT)
def theta_log_target(K, L, theta, a, c):
    ld = chol_logdet(K, L)
    if ld == -np.inf:
        return -np.inf
    return a * ld - 0.5 * np.dot(theta, c)


@numba.jit(**_JIT)
def _adapt(step, acc, t):
    gamma = 1.0 / (t + 1.0) ** 0.6
    return step * math.exp(gamma * (acc - TARGET_ACCEPT))


@numba.jit(**_JIT)
def _set_class(K, cls_ptr, cls_rows, cls_cols, r, val):
    for q in range(cls_ptr[r], cls_ptr[r + 1]):
        i = cls_rows[q]
        j = cls_cols[q]
        K[i, j] = val
        K[j, i] = val


@numba.jit(**_JIT)
def rw_steps(theta, K, L, state, steps, n_acc, n_prop, n_steps, adapt,
             rng, a, c, cls_ptr, cls_rows, cls_cols):
    """Single-coordinate Gaussian random-walk updates, coordinates cycled.

    ``state`` = [log_target, next_coord, step_counter].
    """
    m = theta.shape[0]
    for _ in range(n_steps):
        r = int(state[1])
        cur = state[0]
        old = theta[r]
        val = old + steps[r] * rng.standard_normal()
        _set_class(K, cls_ptr, cls_rows, cls_cols, r, val)
        theta[r] = val
        new = theta_log_target(K, L, theta, a, c)
        u = rng.random()
        acc = 0.0
        if new > -np.inf:
            acc = math.exp(min(0.0, new - cur))
        n_prop[r] += 1
        if u < acc:
            state[0] = new
            n_acc[r] += 1
        else:
            # assignment, not subtraction, so a rejection restores K exactly
            theta[r] = old
            _set_class(K, cls_ptr, cls_rows, cls_cols, r, old)
        t = state[2]
        if adapt:
            steps[r] = _adapt(steps[r], acc, t // m)
        state[2] = t + 1.0
        state[1] = float((r + 1) % m)


@numba.jit(**_JIT)
def rw_chain(theta, K, L, state, steps, n_acc, n_prop, n_sweeps, adapt,
             rng, a, c, cls_ptr, cls_rows, cls_cols, draws, draw_offset, thin, iter0):
    """Run ``n_sweeps`` sweeps; theta is stored after every ``thin``-th."""
    m = theta.shape[0]
    k = draw_offset
    for s in range(n_sweeps):
        rw_steps(theta, K, L, state, steps, n_acc, n_prop, m, adapt,
                 rng, a, c, cls_ptr, cls_rows, cls_cols)
        if draws.shape[0] > 0 and (iter0 + s) % thin == 0:
            draws[k, :] = theta
            k += 1
    return k


# ---------------------------------------------------------------- Psi sampler

@numba.jit(**_JIT)
def complete(z, Q, pos_cls, free_idx, start_row, Psi, Phi, theta, jac_rows):
    """Fill Psi/Phi/theta from the free vector ``z``.

    Rows before ``start_row`` are assumed current. ``jac_rows[i]`` holds
    the log-Jacobian contribution of row ``i``. Returns False when a
    constrained diagonal has no admissible value.
    """
    p = Q.shape[0]
    for i in range(start_row, p):
        lj = 0.0
        s = 0.0
        for k in range(i):
            s += Phi[k, i] * Phi[k, i]
        r = pos_cls[i, i]
        m = free_idx[i, i]
        if m >= 0:
            psi = z[m]
            if not psi > 0.0:
                return False
            Psi[i, i] = psi
            phi_ii = psi * Q[i, i]
            theta[r] = phi_ii * phi_ii + s
            lj += math.log(2.0 * psi * Q[i, i] * Q[i, i])
        else:
            t = theta[r] - s
            if not t > 0.0:
                return False
            phi_ii = math.sqrt(t)
            Psi[i, i] = phi_ii / Q[i, i]
        Phi[i, i] = phi_ii
        for j in range(i + 1, p):
            s = 0.0
            for k in range(i):
                s += Phi[k, i] * Phi[k, j]
            rest = 0.0
            for l in range(i, j):
                rest += Psi[i, l] * Q[l, j]
            r = pos_cls[i, j]
            m = free_idx[i, j]
            if m >= 0:
                Psi[i, j] = z[m]
                Phi[i, j] = rest + z[m] * Q[j, j]
                theta[r] = phi_ii * Phi[i, j] + s
                lj += math.log(phi_ii * Q[j, j])
            else:
                target = theta[r] if r >= 0 else 0.0
                Phi[i, j] = (target - s) / phi_ii
                Psi[i, j] = (Phi[i, j] - rest) / Q[j, j]
        jac_rows[i] = lj
    return True


@numba.jit(**_JIT)
def psi_log_target(Phi, theta, jac_rows, a, c):
    p = Phi.shape[0]
    ld = 0.0
    lj = 0.0
    for i in range(p):
        ld += 2.0 * math.log(Phi[i, i])
        lj += jac_rows[i]
    return a * ld - 0.5 * np.dot(theta, c) + lj


@numba.jit(**_JIT)
def _chi_scale_logratio(cfac, nu):
    # reverse/forward proposal density ratio for z' = z * cfac,
    # cfac = sqrt(chi2_nu / nu)
    return (1.0 - 2.0 * nu) * math.log(cfac) + 0.5 * nu * (cfac * cfac - 1.0 / (cfac * cfac))


@numba.jit(**_JIT)
def _indep_logq(z, is_diag, df):
    out = 0.0
    for m in range(z.shape[0]):
        if is_diag[m]:
            out += (df[m] - 1.0) * math.log(z[m]) - 0.5 * z[m] * z[m]
        else:
            out += -0.5 * z[m] * z[m]
    return out


@numba.jit(**_JIT)
def psi_iteration(z, Psi, Phi, theta, jac, state, steps, n_acc, n_prop, adapt,
                  rng, a, c, Q, pos_cls, free_idx, free_row, is_diag, df,
                  z2, Psi2, Phi2, theta2, jac2):
    """One iteration: a joint independence proposal on all free elements,
    then one local move per free element.

    ``state`` = [log_target, iteration_counter, n_complete_fail].
    Counters index ``n_free`` is the joint move.
    """
    nf = z.shape[0]
    t = state[1]
    # joint move: normal off-diagonals, chi diagonals
    for m in range(nf):
        if is_diag[m]:
            z2[m] = math.sqrt(rng.chisquare(df[m]))
        else:
            z2[m] = rng.standard_normal()
    Psi2[:, :] = Psi
    Phi2[:, :] = Phi
    theta2[:] = theta
    jac2[:] = jac
    ok = complete(z2, Q, pos_cls, free_idx, 0, Psi2, Phi2, theta2, jac2)
    n_prop[nf] += 1
    u = rng.random()
    if ok:
        new = psi_log_target(Phi2, theta2, jac2, a, c)
        logr = new - state[0] + _indep_logq(z, is_diag, df) - _indep_logq(z2, is_diag, df)
        if u < math.exp(min(0.0, logr)):
            z[:] = z2
            Psi[:, :] = Psi2
            Phi[:, :] = Phi2
            theta[:] = theta2
            jac[:] = jac2
            state[0] = new
            n_acc[nf] += 1
    else:
        state[2] += 1
    # local moves
    for m in range(nf):
        z2[:] = z
        corr = 0.0
        if is_diag[m]:
            sd = min(steps[m], 1.0)
            nu = 1.0 / (2.0 * sd * sd)
            cfac = math.sqrt(rng.chisquare(nu) / nu)
            if cfac > 0.0:
                z2[m] = z[m] * cfac
                corr = _chi_scale_logratio(cfac, nu)
            else:
                z2[m] = 0.0
        else:
            z2[m] = z[m] + steps[m] * rng.standard_normal()
        row = free_row[m]
        Psi2[:, :] = Psi
        Phi2[:, :] = Phi
        theta2[:] = theta
        jac2[:] = jac
        ok = complete(z2, Q, pos_cls, free_idx, row, Psi2, Phi2, theta2, jac2)
        n_prop[m] += 1
        u = rng.random()
        acc = 0.0
        if ok:
            new = psi_log_target(Phi2, theta2, jac2, a, c)
            logr = new - state[0] + corr
            acc = math.exp(min(0.0, logr))
            if u < acc:
                z[m] = z2[m]
                for i in range(row, Psi.shape[0]):
                    Psi[i, :] = Psi2[i, :]
                    Phi[i, :] = Phi2[i, :]
                theta[:] = theta2
                jac[:] = jac2
                state[0] = new
                n_acc[m] += 1
        else:
            state[2] += 1
        if adapt:
            steps[m] = _adapt(steps[m], acc, t)
    state[1] = t + 1.0


@numba.jit(**_JIT)
def psi_chain(z, Psi, Phi, theta, jac, state, steps, n_acc, n_prop, n_iters, adapt,
              rng, a, c, Q, pos_cls, free_idx, free_row, is_diag, df,
              draws, draw_offset, thin, iter0):
    nf = z.shape[0]
    p = Q.shape[0]
    z2 = np.empty(nf)
    Psi2 = np.empty((p, p))
    Phi2 = np.empty((p, p))
    theta2 = np.empty(theta.shape[0])
    jac2 = np.empty(p)
    k = draw_offset
    for s in range(n_iters):
        psi_iteration(z, Psi, Phi, theta, jac, state, steps, n_acc, n_prop, adapt,
                      rng, a, c, Q, pos_cls, free_idx, free_row, is_diag, df,
                      z2, Psi2, Phi2, theta2, jac2)
        if draws.shape[0] > 0 and (iter0 + s) % thin == 0:
            draws[k, :] = theta
            k += 1
    return k
