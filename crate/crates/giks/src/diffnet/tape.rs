use super::tensor::Tensor2;
use crate::error::{Error, Result};

/// One trainable parameter block with its gradient and optimizer state.
/// Gradients accumulate across backward passes until `ParamSet::zero_grads`.
#[derive(Debug, Clone)]
pub struct ParamBlock {
    pub name: String,
    pub value: Tensor2,
    pub grad: Tensor2,
    pub moment1: Tensor2,
    pub moment2: Tensor2,
    pub step_count: u64,
}

impl ParamBlock {
    pub fn new(name: impl Into<String>, value: Tensor2) -> Self {
        let (r, c) = (value.rows(), value.cols());
        ParamBlock {
            name: name.into(),
            value,
            grad: Tensor2::zeros(r, c),
            moment1: Tensor2::zeros(r, c),
            moment2: Tensor2::zeros(r, c),
            step_count: 0,
        }
    }
}

/// Identifier of a block inside a `ParamSet`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ParamId(pub(crate) usize);

/// The full parameter collection of a model, in registration order.
#[derive(Debug, Clone, Default)]
pub struct ParamSet {
    blocks: Vec<ParamBlock>,
}

impl ParamSet {
    pub fn new() -> Self {
        ParamSet { blocks: Vec::new() }
    }

    pub fn add(&mut self, name: impl Into<String>, value: Tensor2) -> ParamId {
        self.blocks.push(ParamBlock::new(name, value));
        ParamId(self.blocks.len() - 1)
    }

    pub fn len(&self) -> usize {
        self.blocks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.blocks.is_empty()
    }

    pub fn block(&self, id: ParamId) -> &ParamBlock {
        &self.blocks[id.0]
    }

    pub fn block_mut(&mut self, id: ParamId) -> &mut ParamBlock {
        &mut self.blocks[id.0]
    }

    pub fn blocks(&self) -> &[ParamBlock] {
        &self.blocks
    }

    pub fn blocks_mut(&mut self) -> &mut [ParamBlock] {
        &mut self.blocks
    }

    pub fn zero_grads(&mut self) {
        for b in &mut self.blocks {
            b.grad.fill(0.0);
        }
    }

    /// Total number of scalar parameters.
    pub fn param_count(&self) -> usize {
        self.blocks.iter().map(|b| b.value.rows() * b.value.cols()).sum()
    }
}

/// Eager affine transform: `input * W + bias` with the bias row broadcast.
pub fn forward_affine(input: &Tensor2, weights: &ParamBlock, bias: &ParamBlock) -> Result<Tensor2> {
    let w = &weights.value;
    let b = &bias.value;
    if input.cols() != w.rows() {
        return Err(Error::Dimension(format!(
            "affine input cols {} vs weight rows {}",
            input.cols(),
            w.rows()
        )));
    }
    if b.rows() * b.cols() != w.cols() {
        return Err(Error::Dimension(format!(
            "affine bias length {} vs weight cols {}",
            b.rows() * b.cols(),
            w.cols()
        )));
    }
    let mut out = input.matmul(w)?;
    let bs = b.data();
    for r in 0..out.rows() {
        for c in 0..out.cols() {
            let v = out.get(r, c) + bs[c];
            out.set(r, c, v);
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NodeId(usize);

enum Op {
    Const,
    Affine { x: NodeId, w: ParamId, b: ParamId },
    Relu { x: NodeId },
    /// Varying-coefficient layer: the layer weights are a spline-basis
    /// contraction of `bank`, with the bias folded in as an extra input row.
    /// `kron` caches the row-wise [z|1] (x) basis expansion for backward.
    VcLayer { z: NodeId, bank: ParamId, basis: Tensor2, kron: Tensor2 },
    Mul { a: NodeId, b: NodeId },
    Add { a: NodeId, b: NodeId },
    SubConst { x: NodeId },
    MulConst { x: NodeId, c: Tensor2 },
    Scale { x: NodeId, s: f64 },
    Square { x: NodeId },
    Sum { x: NodeId },
    Mean { x: NodeId },
}

struct Node {
    value: Tensor2,
    op: Op,
}

/// Records the fixed set of operations the model needs and replays them in
/// reverse to accumulate parameter gradients. Forward values are computed
/// eagerly at record time.
pub struct Tape {
    nodes: Vec<Node>,
}

impl Default for Tape {
    fn default() -> Self {
        Self::new()
    }
}

impl Tape {
    pub fn new() -> Self {
        Tape { nodes: Vec::new() }
    }

    fn push(&mut self, value: Tensor2, op: Op) -> NodeId {
        self.nodes.push(Node { value, op });
        NodeId(self.nodes.len() - 1)
    }

    pub fn value(&self, id: NodeId) -> &Tensor2 {
        &self.nodes[id.0].value
    }

    /// Scalar value of a 1x1 node.
    pub fn scalar(&self, id: NodeId) -> Result<f64> {
        let v = &self.nodes[id.0].value;
        if v.rows() != 1 || v.cols() != 1 {
            return Err(Error::Contract(format!("node is {}x{}, not scalar", v.rows(), v.cols())));
        }
        Ok(v.data()[0])
    }

    pub fn constant(&mut self, value: Tensor2) -> NodeId {
        self.push(value, Op::Const)
    }

    pub fn affine(&mut self, ps: &ParamSet, x: NodeId, w: ParamId, b: ParamId) -> Result<NodeId> {
        let out = forward_affine(&self.nodes[x.0].value, ps.block(w), ps.block(b))?;
        Ok(self.push(out, Op::Affine { x, w, b }))
    }

    pub fn relu(&mut self, x: NodeId) -> NodeId {
        let xv = &self.nodes[x.0].value;
        let mut out = xv.clone();
        out.data_mut().iter_mut().for_each(|v| *v = v.max(0.0));
        self.push(out, Op::Relu { x })
    }

    /// Varying-coefficient layer. `z` is n x in, `basis` is n x k (spline
    /// basis evaluated at each row's treatment), `bank` is ((in+1)*k) x out
    /// with bank row j*k + m holding the m-th basis coefficient for input j;
    /// the last input row (j == in) is the bias.
    pub fn vc_layer(
        &mut self,
        ps: &ParamSet,
        z: NodeId,
        basis: &Tensor2,
        bank: ParamId,
    ) -> Result<NodeId> {
        let zv = &self.nodes[z.0].value;
        let n = zv.rows();
        let d_in = zv.cols();
        let k = basis.cols();
        let bank_t = &ps.block(bank).value;
        if basis.rows() != n {
            return Err(Error::Dimension("vc_layer basis rows != batch rows".into()));
        }
        if bank_t.rows() != (d_in + 1) * k {
            return Err(Error::Dimension(format!(
                "vc_layer bank rows {} != (in+1)*k = {}",
                bank_t.rows(),
                (d_in + 1) * k
            )));
        }
        // kron[i, j*k+m] = ztilde[i,j] * basis[i,m] with ztilde = [z | 1]
        let mut kron = Tensor2::zeros(n, (d_in + 1) * k);
        for i in 0..n {
            let zrow = zv.row(i);
            let brow = basis.row(i);
            let krow = &mut kron.data_mut()[i * (d_in + 1) * k..(i + 1) * (d_in + 1) * k];
            for j in 0..d_in {
                for m in 0..k {
                    krow[j * k + m] = zrow[j] * brow[m];
                }
            }
            for m in 0..k {
                krow[d_in * k + m] = brow[m];
            }
        }
        let out = kron.matmul(bank_t)?;
        Ok(self.push(out, Op::VcLayer { z, bank, basis: basis.clone(), kron }))
    }

    pub fn mul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let av = &self.nodes[a.0].value;
        let bv = &self.nodes[b.0].value;
        if !av.same_shape(bv) {
            return Err(Error::Dimension("mul shape mismatch".into()));
        }
        let mut out = av.clone();
        for (o, &x) in out.data_mut().iter_mut().zip(bv.data()) {
            *o *= x;
        }
        Ok(self.push(out, Op::Mul { a, b }))
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let av = &self.nodes[a.0].value;
        let bv = &self.nodes[b.0].value;
        if !av.same_shape(bv) {
            return Err(Error::Dimension("add shape mismatch".into()));
        }
        let mut out = av.clone();
        for (o, &x) in out.data_mut().iter_mut().zip(bv.data()) {
            *o += x;
        }
        Ok(self.push(out, Op::Add { a, b }))
    }

    pub fn sub_const(&mut self, x: NodeId, c: &Tensor2) -> Result<NodeId> {
        let xv = &self.nodes[x.0].value;
        if !xv.same_shape(c) {
            return Err(Error::Dimension("sub_const shape mismatch".into()));
        }
        let mut out = xv.clone();
        for (o, &v) in out.data_mut().iter_mut().zip(c.data()) {
            *o -= v;
        }
        Ok(self.push(out, Op::SubConst { x }))
    }

    pub fn mul_const(&mut self, x: NodeId, c: &Tensor2) -> Result<NodeId> {
        let xv = &self.nodes[x.0].value;
        if !xv.same_shape(c) {
            return Err(Error::Dimension("mul_const shape mismatch".into()));
        }
        let mut out = xv.clone();
        for (o, &v) in out.data_mut().iter_mut().zip(c.data()) {
            *o *= v;
        }
        Ok(self.push(out, Op::MulConst { x, c: c.clone() }))
    }

    pub fn scale(&mut self, x: NodeId, s: f64) -> NodeId {
        let mut out = self.nodes[x.0].value.clone();
        out.scale_assign(s);
        self.push(out, Op::Scale { x, s })
    }

    pub fn square(&mut self, x: NodeId) -> NodeId {
        let mut out = self.nodes[x.0].value.clone();
        out.data_mut().iter_mut().for_each(|v| *v *= *v);
        self.push(out, Op::Square { x })
    }

    pub fn sum(&mut self, x: NodeId) -> NodeId {
        let total: f64 = self.nodes[x.0].value.data().iter().sum();
        self.push(Tensor2::from_vec(1, 1, vec![total]).unwrap(), Op::Sum { x })
    }

    pub fn mean(&mut self, x: NodeId) -> NodeId {
        let v = &self.nodes[x.0].value;
        let n = (v.rows() * v.cols()) as f64;
        let total: f64 = v.data().iter().sum();
        self.push(Tensor2::from_vec(1, 1, vec![total / n]).unwrap(), Op::Mean { x })
    }

    /// Reverse pass from a scalar loss node. Parameter gradients are added
    /// into each block's `grad` buffer (accumulation is the caller's
    /// responsibility to reset via `zero_grads`).
    pub fn backward(&self, loss: NodeId, ps: &mut ParamSet) -> Result<()> {
        let lv = &self.nodes[loss.0].value;
        if lv.rows() != 1 || lv.cols() != 1 {
            return Err(Error::Contract(format!(
                "backward requires a scalar loss, got {}x{}",
                lv.rows(),
                lv.cols()
            )));
        }
        let mut grads: Vec<Option<Tensor2>> = (0..self.nodes.len()).map(|_| None).collect();
        let mut pgrads: Vec<Option<Tensor2>> = (0..ps.len()).map(|_| None).collect();
        grads[loss.0] = Some(Tensor2::from_vec(1, 1, vec![1.0]).unwrap());

        for idx in (0..=loss.0).rev() {
            let dy = match grads[idx].take() {
                Some(g) => g,
                None => continue,
            };
            match &self.nodes[idx].op {
                Op::Const => {}
                Op::Affine { x, w, b } => {
                    let xv = &self.nodes[x.0].value;
                    let wv = &ps.block(*w).value;
                    // dX = dY W^T
                    let dx = dy.matmul_t(wv)?;
                    accumulate(&mut grads[x.0], dx)?;
                    // dW = X^T dY
                    let dw = xv.t_matmul(&dy)?;
                    accumulate_param(&mut pgrads[w.0], dw)?;
                    // db = column sums of dY
                    let bshape = &ps.block(*b).value;
                    let mut db = Tensor2::zeros(bshape.rows(), bshape.cols());
                    for r in 0..dy.rows() {
                        for c in 0..dy.cols() {
                            db.data_mut()[c] += dy.get(r, c);
                        }
                    }
                    accumulate_param(&mut pgrads[b.0], db)?;
                }
                Op::Relu { x } => {
                    let xv = &self.nodes[x.0].value;
                    let mut dx = dy;
                    for (g, &v) in dx.data_mut().iter_mut().zip(xv.data()) {
                        if v <= 0.0 {
                            *g = 0.0;
                        }
                    }
                    accumulate(&mut grads[x.0], dx)?;
                }
                Op::VcLayer { z, bank, basis, kron } => {
                    // dBank = kron^T dY
                    let dbank = kron.t_matmul(&dy)?;
                    accumulate_param(&mut pgrads[bank.0], dbank)?;
                    // dKron = dY bank^T, then contract with basis to get dZ
                    let bank_t = &ps.block(*bank).value;
                    let dkron = dy.matmul_t(bank_t)?;
                    let zv = &self.nodes[z.0].value;
                    let d_in = zv.cols();
                    let k = basis.cols();
                    let mut dz = Tensor2::zeros(zv.rows(), d_in);
                    for i in 0..zv.rows() {
                        let brow = basis.row(i);
                        let krow = dkron.row(i);
                        for j in 0..d_in {
                            let mut acc = 0.0;
                            for m in 0..k {
                                acc += krow[j * k + m] * brow[m];
                            }
                            dz.set(i, j, acc);
                        }
                    }
                    accumulate(&mut grads[z.0], dz)?;
                }
                Op::Mul { a, b } => {
                    let av = self.nodes[a.0].value.clone();
                    let bv = &self.nodes[b.0].value;
                    let mut da = dy.clone();
                    for (g, &v) in da.data_mut().iter_mut().zip(bv.data()) {
                        *g *= v;
                    }
                    accumulate(&mut grads[a.0], da)?;
                    let mut db = dy;
                    for (g, &v) in db.data_mut().iter_mut().zip(av.data()) {
                        *g *= v;
                    }
                    accumulate(&mut grads[b.0], db)?;
                }
                Op::Add { a, b } => {
                    accumulate(&mut grads[a.0], dy.clone())?;
                    accumulate(&mut grads[b.0], dy)?;
                }
                Op::SubConst { x } => {
                    accumulate(&mut grads[x.0], dy)?;
                }
                Op::MulConst { x, c } => {
                    let mut dx = dy;
                    for (g, &v) in dx.data_mut().iter_mut().zip(c.data()) {
                        *g *= v;
                    }
                    accumulate(&mut grads[x.0], dx)?;
                }
                Op::Scale { x, s } => {
                    let mut dx = dy;
                    dx.scale_assign(*s);
                    accumulate(&mut grads[x.0], dx)?;
                }
                Op::Square { x } => {
                    let xv = &self.nodes[x.0].value;
                    let mut dx = dy;
                    for (g, &v) in dx.data_mut().iter_mut().zip(xv.data()) {
                        *g *= 2.0 * v;
                    }
                    accumulate(&mut grads[x.0], dx)?;
                }
                Op::Sum { x } => {
                    let xv = &self.nodes[x.0].value;
                    let g = dy.data()[0];
                    let mut dx = Tensor2::zeros(xv.rows(), xv.cols());
                    dx.fill(g);
                    accumulate(&mut grads[x.0], dx)?;
                }
                Op::Mean { x } => {
                    let xv = &self.nodes[x.0].value;
                    let n = (xv.rows() * xv.cols()) as f64;
                    let g = dy.data()[0] / n;
                    let mut dx = Tensor2::zeros(xv.rows(), xv.cols());
                    dx.fill(g);
                    accumulate(&mut grads[x.0], dx)?;
                }
            }
        }

        for (i, pg) in pgrads.into_iter().enumerate() {
            if let Some(g) = pg {
                ps.blocks_mut()[i].grad.add_assign(&g)?;
            }
        }
        Ok(())
    }
}

fn accumulate(slot: &mut Option<Tensor2>, g: Tensor2) -> Result<()> {
    match slot {
        Some(existing) => existing.add_assign(&g),
        None => {
            *slot = Some(g);
            Ok(())
        }
    }
}

fn accumulate_param(slot: &mut Option<Tensor2>, g: Tensor2) -> Result<()> {
    accumulate(slot, g)
}
