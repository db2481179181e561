"""Pure-Python car-following step kernel.

Reference implementation of the per-step speed/position update for one
lane.  `_stepcore.pyx` mirrors this function statement for statement;
both must produce bit-identical float64 results, so keep every
arithmetic expression and its evaluation order in sync when editing.

Vehicles are ordered front first (descending position).  For vehicle i
the update is:

1. accelerate toward the desired speed,
2. cap at the Krauss safe speed w.r.t. the leader's start-of-step state,
3. cap at the safe speed w.r.t. an active stop line (standing obstacle),
4. subtract the random dawdling term,
5. clamp into [v - emergency_decel*dt, >=0],
6. hard-cap so the end-of-step gap to the leader's new position stays
   at least min_gap, and so a held stop line is never crossed.

Step 6 makes the no-collision and no-red-crossing guarantees exact
regardless of the model terms above it.
"""

# Sentinel for "no stop line constrains this vehicle".
FREE_ROAD = 1e18

# Vehicles aim to halt this far before the stop line (m).
STOP_STANDOFF = 0.5

# The hard clamp keeps them strictly short of the line by this much (m).
LINE_BUFFER = 0.1


def step_lane(pos_old, speed_old, pos_new, speed_new, vmax, u, stop_pos,
              n, dt, accel, decel, edecel, mingap, tau, sigma, veh_len):
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
