//! Exact finite optimal transport by successive shortest augmenting paths.

const EPS: f64 = 1e-15;

struct Arc {
    to: usize,
    cap: f64,
    cost: f64,
}

struct Network {
    arcs: Vec<Arc>,
    out: Vec<Vec<usize>>,
}

impl Network {
    fn new(nodes: usize) -> Self {
        Network {
            arcs: Vec::new(),
            out: vec![Vec::new(); nodes],
        }
    }

    /// Adds `u -> v` and its residual twin at index `id ^ 1`.
    fn add(&mut self, u: usize, v: usize, cap: f64, cost: f64) {
        self.out[u].push(self.arcs.len());
        self.arcs.push(Arc { to: v, cap, cost });
        self.out[v].push(self.arcs.len());
        self.arcs.push(Arc {
            to: u,
            cap: 0.0,
            cost: -cost,
        });
    }
}

/// Minimum of `Σ_ij π_ij d_ij` over couplings `π` of `p` and `q`.
///
/// Mass shared by `p` and `q` at the same point stays in place; for a metric cost
/// this does not change the optimum. The remainder is routed along shortest residual
/// paths found by Dijkstra on reduced costs, with node potentials keeping them
/// nonnegative.
pub fn transport_cost(p: &[f64], q: &[f64], d: &[Vec<f64>]) -> f64 {
    let n = p.len();
    debug_assert_eq!(q.len(), n);
    let sources: Vec<usize> = (0..n).filter(|&i| p[i] - q[i] > EPS).collect();
    let sinks: Vec<usize> = (0..n).filter(|&j| q[j] - p[j] > EPS).collect();
    if sources.is_empty() || sinks.is_empty() {
        return 0.0;
    }
    let (ns, nt) = (sources.len(), sinks.len());
    // nodes: 0 = super source, 1..=ns sources, then sinks, then the super sink
    let sink = ns + nt + 1;
    let nodes = sink + 1;
    let mut net = Network::new(nodes);
    for (a, &i) in sources.iter().enumerate() {
        net.add(0, 1 + a, p[i] - q[i], 0.0);
        for (b, &j) in sinks.iter().enumerate() {
            net.add(1 + a, 1 + ns + b, f64::INFINITY, d[i][j]);
        }
    }
    for (b, &j) in sinks.iter().enumerate() {
        net.add(1 + ns + b, sink, q[j] - p[j], 0.0);
    }

    let mut potential = vec![0.0f64; nodes];
    let mut cost = 0.0;
    for _ in 0..(4 * (ns + nt) * (ns + nt) + 16) {
        let mut dist = vec![f64::INFINITY; nodes];
        let mut via = vec![usize::MAX; nodes];
        let mut done = vec![false; nodes];
        dist[0] = 0.0;
        loop {
            let mut u = usize::MAX;
            for v in 0..nodes {
                if !done[v] && dist[v].is_finite() && (u == usize::MAX || dist[v] < dist[u]) {
                    u = v;
                }
            }
            if u == usize::MAX {
                break;
            }
            done[u] = true;
            for &e in &net.out[u] {
                let arc = &net.arcs[e];
                if arc.cap <= EPS || done[arc.to] {
                    continue;
                }
                let reduced = (arc.cost + potential[u] - potential[arc.to]).max(0.0);
                if dist[u] + reduced < dist[arc.to] {
                    dist[arc.to] = dist[u] + reduced;
                    via[arc.to] = e;
                }
            }
        }
        if !dist[sink].is_finite() {
            break;
        }
        for v in 0..nodes {
            if dist[v].is_finite() {
                potential[v] += dist[v];
            }
        }
        let mut bottleneck = f64::INFINITY;
        let mut v = sink;
        while v != 0 {
            let e = via[v];
            bottleneck = bottleneck.min(net.arcs[e].cap);
            v = net.arcs[e ^ 1].to;
        }
        if bottleneck <= EPS {
            break;
        }
        let mut v = sink;
        while v != 0 {
            let e = via[v];
            net.arcs[e].cap -= bottleneck;
            net.arcs[e ^ 1].cap += bottleneck;
            cost += bottleneck * net.arcs[e].cost;
            v = net.arcs[e ^ 1].to;
        }
    }
    cost.max(0.0)
}
