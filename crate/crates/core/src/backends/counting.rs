use std::sync::atomic::{AtomicUsize, Ordering};

use super::{Backend, BackendDescriptor, BackendResult, CorefProposal, Embedding, NliLogits};

/// Per-capability call counters. Batch calls count one per item.
#[derive(Debug, Default)]
pub struct CallCounts {
    pub nli: AtomicUsize,
    pub embed: AtomicUsize,
    pub punctuate: AtomicUsize,
    pub truecase: AtomicUsize,
    pub coref_propose: AtomicUsize,
    pub antecedent_select: AtomicUsize,
    pub decoder_rewrite: AtomicUsize,
    pub cross_encode: AtomicUsize,
}

impl CallCounts {
    pub fn total(&self) -> usize {
        [
            &self.nli,
            &self.embed,
            &self.punctuate,
            &self.truecase,
            &self.coref_propose,
            &self.antecedent_select,
            &self.decoder_rewrite,
            &self.cross_encode,
        ]
        .iter()
        .map(|c| c.load(Ordering::SeqCst))
        .sum()
    }

    pub fn get(counter: &AtomicUsize) -> usize {
        counter.load(Ordering::SeqCst)
    }
}

/// Wraps a backend and counts every call that reaches it.
pub struct CountingBackend<B> {
    inner: B,
    pub counts: CallCounts,
}

impl<B: Backend> CountingBackend<B> {
    pub fn new(inner: B) -> Self {
        CountingBackend {
            inner,
            counts: CallCounts::default(),
        }
    }

    pub fn inner(&self) -> &B {
        &self.inner
    }
}

fn bump(c: &AtomicUsize, n: usize) {
    c.fetch_add(n, Ordering::SeqCst);
}

impl<B: Backend> Backend for CountingBackend<B> {
    fn descriptor(&self) -> &BackendDescriptor {
        self.inner.descriptor()
    }

    fn nli_logits(&self, premise: &str, hypothesis: &str) -> BackendResult<NliLogits> {
        bump(&self.counts.nli, 1);
        self.inner.nli_logits(premise, hypothesis)
    }

    fn nli_logits_batch(&self, pairs: &[(&str, &str)]) -> BackendResult<Vec<NliLogits>> {
        bump(&self.counts.nli, pairs.len());
        self.inner.nli_logits_batch(pairs)
    }

    fn embed(&self, text: &str) -> BackendResult<Embedding> {
        bump(&self.counts.embed, 1);
        self.inner.embed(text)
    }

    fn embed_batch(&self, texts: &[&str]) -> BackendResult<Vec<Embedding>> {
        bump(&self.counts.embed, texts.len());
        self.inner.embed_batch(texts)
    }

    fn punctuate(&self, turn: &str) -> BackendResult<String> {
        bump(&self.counts.punctuate, 1);
        self.inner.punctuate(turn)
    }

    fn truecase(&self, turn: &str) -> BackendResult<String> {
        bump(&self.counts.truecase, 1);
        self.inner.truecase(turn)
    }

    fn coref_propose(&self, context: &[String], claim: &str) -> BackendResult<Vec<CorefProposal>> {
        bump(&self.counts.coref_propose, 1);
        self.inner.coref_propose(context, claim)
    }

    fn antecedent_select(
        &self,
        context: &[String],
        claim: &str,
        proposal: &CorefProposal,
    ) -> BackendResult<usize> {
        bump(&self.counts.antecedent_select, 1);
        self.inner.antecedent_select(context, claim, proposal)
    }

    fn decoder_rewrite(&self, context: &[String], claim: &str) -> BackendResult<String> {
        bump(&self.counts.decoder_rewrite, 1);
        self.inner.decoder_rewrite(context, claim)
    }

    fn cross_encode(&self, query: &str, passage: &str) -> BackendResult<f64> {
        bump(&self.counts.cross_encode, 1);
        self.inner.cross_encode(query, passage)
    }

    fn cross_encode_batch(&self, query: &str, passages: &[&str]) -> BackendResult<Vec<f64>> {
        bump(&self.counts.cross_encode, passages.len());
        self.inner.cross_encode_batch(query, passages)
    }
}
