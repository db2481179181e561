# cython: boundscheck=False, wraparound=False, cdivision=False
"""Compiled car-following step kernel.

Mirror of `_kernel_py.step_lane`, statement for statement.  Both
implementations must stay bit-identical: same expressions, same
evaluation order, IEEE double arithmetic only (the build disables
floating-point contraction).
"""

DEF FREE_ROAD = 1e18
DEF STOP_STANDOFF = 0.5
DEF LINE_BUFFER = 0.1


def step_lane(double[::1] pos_old, double[::1] speed_old,
              double[::1] pos_new, double[::1] speed_new,
              double[::1] vmax, double[::1] u, double[::1] stop_pos,
              int n, double dt, double accel, double decel, double edecel,
              double mingap, double tau, double sigma, double veh_len):
    cdef int i
    cdef double v, v_des, gap, vl, vsafe, sgap, vstop, vmin, room, vcap
    for i in range(n):
        v = speed_old[i]
        v_des = v + accel * dt
        if v_des > vmax[i]:
            v_des = vmax[i]
        if i > 0:
            gap = pos_old[i - 1] - veh_len - pos_old[i] - mingap
            vl = speed_old[i - 1]
            vsafe = vl + (gap - vl * tau) / ((v + vl) / (2.0 * decel) + tau)
            if vsafe < v_des:
                v_des = vsafe
        if stop_pos[i] < FREE_ROAD:
            sgap = stop_pos[i] - STOP_STANDOFF - pos_old[i]
            vstop = sgap / (v / (2.0 * decel) + tau)
            if vstop < v_des:
                v_des = vstop
        if sigma > 0.0:
            v_des = v_des - sigma * accel * dt * u[i]
        vmin = v - edecel * dt
        if v_des < vmin:
            v_des = vmin
        if v_des < 0.0:
            v_des = 0.0
        if i > 0:
            room = pos_new[i - 1] - veh_len - mingap - pos_old[i]
            if room < 0.0:
                room = 0.0
            vcap = room / dt
            if v_des > vcap:
                v_des = vcap
        if stop_pos[i] < FREE_ROAD:
            room = stop_pos[i] - LINE_BUFFER - pos_old[i]
            if room < 0.0:
                room = 0.0
            vcap = room / dt
            if v_des > vcap:
                v_des = vcap
        speed_new[i] = v_des
        pos_new[i] = pos_old[i] + v_des * dt
