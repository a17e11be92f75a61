// Candidate selection flow: original plate beside every candidate, click
// (or keyboard) to choose, explicit confirmation, then POST {index}.
import { ApiError } from './api.js';
import { clear, el, plateImage } from './dom.js';
export const renderSelection = (root, api, payload, callbacks) => {
    clear(root);
    let chosen = null;
    const banner = el('p', { class: 'banner hidden', role: 'alert' });
    const confirmBtn = el('button', { class: 'confirm', disabled: '' }, [
        'Confirm selection',
    ]);
    const candidateButtons = payload.candidate_images.map((src, i) => {
        const btn = el('button', {
            class: 'candidate',
            'data-index': String(i),
            'aria-label': `candidate ${i + 1} of ${payload.count}`,
        });
        btn.append(plateImage(src, `candidate ${i + 1}`));
        btn.addEventListener('click', () => {
            chosen = i;
            candidateButtons.forEach((b, j) => b.classList.toggle('chosen', j === i));
            confirmBtn.disabled = false;
        });
        return btn;
    });
    confirmBtn.addEventListener('click', async () => {
        if (chosen === null)
            return;
        confirmBtn.disabled = true;
        try {
            await api.postSelection(payload.id, chosen);
            callbacks.onResolved(chosen);
        }
        catch (err) {
            confirmBtn.disabled = false;
            if (err instanceof ApiError && err.status === 409) {
                banner.textContent = 'This session was resolved elsewhere.';
                banner.classList.remove('hidden');
                callbacks.onStale();
            }
            else {
                banner.textContent = `Submission failed (${err instanceof ApiError ? err.status : 'network'}); pick again and retry.`;
                banner.classList.remove('hidden');
            }
        }
    });
    root.append(el('h2', {}, [`Select the candidate closest to the original`]), el('p', { class: 'hint' }, [
        `Original plate ${payload.original_label}; ${payload.count} candidates.`,
    ]), el('div', { class: 'original' }, [
        el('h3', {}, ['Original']),
        plateImage(payload.original_image, 'original plate'),
    ]), el('div', { class: 'candidates' }, candidateButtons), confirmBtn, banner);
};
