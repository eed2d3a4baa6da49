use nn::tape::Tape;
use numkit::{RandomStream, Tensor};

#[test]
#[ignore = "manual layer timing probe"]
fn layer_pieces() {
    let mut s = RandomStream::new(1);
    let (b, seq, d) = (64usize, 127usize, 128usize);
    let x = Tensor::new(vec![b, seq, d], s.gauss_vec(b * seq * d, 1.0)).unwrap();
    let w = Tensor::new(vec![d, d], s.gauss_vec(d * d, 0.02)).unwrap();
    let w4 = Tensor::new(vec![d, 4 * d], s.gauss_vec(d * 4 * d, 0.02)).unwrap();
    let w4b = Tensor::new(vec![4 * d, d], s.gauss_vec(d * 4 * d, 0.02)).unwrap();
    let bias = Tensor::zeros(vec![d]);
    let bias4 = Tensor::zeros(vec![4 * d]);
    let gain = Tensor::new(vec![d], vec![1.0; d]).unwrap();

    let time = |label: &str, f: &mut dyn FnMut()| {
        let t0 = std::time::Instant::now();
        for _ in 0..5 {
            f();
        }
        println!("{label}: {:.1} ms", t0.elapsed().as_secs_f64() / 5.0 * 1e3);
    };

    time("attention layer fwd", &mut || {
        let mut tape = Tape::new();
        let xid = tape.leaf(x.clone(), true);
        let p = nn::AttentionParams {
            wq: tape.leaf(w.clone(), true),
            bq: tape.leaf(bias.clone(), true),
            wk: tape.leaf(w.clone(), true),
            bk: tape.leaf(bias.clone(), true),
            wv: tape.leaf(w.clone(), true),
            bv: tape.leaf(bias.clone(), true),
            wo: tape.leaf(w.clone(), true),
            bo: tape.leaf(bias.clone(), true),
        };
        let y = nn::causal_attention(&mut tape, xid, &p, 4).unwrap();
        std::hint::black_box(tape.value(y).len());
    });

    time("ffn fwd", &mut || {
        let mut tape = Tape::new();
        let xid = tape.leaf(x.clone(), true);
        let p = nn::FeedForwardParams {
            w1: tape.leaf(w4.clone(), true),
            b1: tape.leaf(bias4.clone(), true),
            w2: tape.leaf(w4b.clone(), true),
            b2: tape.leaf(bias.clone(), true),
        };
        let y = nn::feed_forward(&mut tape, xid, &p);
        std::hint::black_box(tape.value(y).len());
    });

    time("layer_norm fwd", &mut || {
        let mut tape = Tape::new();
        let xid = tape.leaf(x.clone(), true);
        let g = tape.leaf(gain.clone(), true);
        let bb = tape.leaf(bias.clone(), true);
        let y = tape.layer_norm(xid, g, bb);
        std::hint::black_box(tape.value(y).len());
    });

    time("matmul (BSD)x(D,D) alone", &mut || {
        let mut tape = Tape::new();
        let xid = tape.leaf(x.clone(), true);
        let wid = tape.leaf(w.clone(), true);
        let y = tape.matmul(xid, wid);
        std::hint::black_box(tape.value(y).len());
    });

    time("gelu on (B*S,4D)", &mut || {
        let mut tape = Tape::new();
        let h = Tensor::new(vec![b * seq, 4 * d], vec![0.3; b * seq * 4 * d]).unwrap();
        let hid = tape.leaf(h, true);
        let y = tape.gelu(hid);
        std::hint::black_box(tape.value(y).len());
    });

    time("attention core alone", &mut || {
        let mut tape = Tape::new();
        let q = Tensor::new(vec![256, seq, 32], s.gauss_vec(256 * seq * 32, 1.0)).unwrap();
        let qid = tape.leaf(q.clone(), true);
        let y = tape.attention_core(qid, qid, qid);
        std::hint::black_box(tape.value(y).len());
    });
}
