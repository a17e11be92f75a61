// Interview flow: the image alone, a yes/no legibility question and a
// free-text reading. The payload carries no ground truth, so nothing the
// reviewer sees can prime the answer.

import { Api, ApiError, AssessmentPayload } from './api.js'
import { clear, el, plateImage } from './dom.js'

export interface AssessmentCallbacks {
  onResolved: (q1: boolean, q2: string) => void
  onStale: () => void
}

export const renderAssessment = (
  root: HTMLElement,
  api: Api,
  payload: AssessmentPayload,
  callbacks: AssessmentCallbacks,
): void => {
  clear(root)

  const banner = el('p', { class: 'banner hidden', role: 'alert' })
  const q2Input = el('input', {
    type: 'text',
    lang: 'th',
    class: 'q2',
    placeholder: 'license number…',
    'aria-label': 'license number you can read',
  }) as HTMLInputElement

  const yes = el('input', { type: 'radio', name: 'q1', id: 'q1-yes' }) as HTMLInputElement
  const no = el('input', { type: 'radio', name: 'q1', id: 'q1-no' }) as HTMLInputElement
  const submit = el('button', { class: 'submit', disabled: '' }, ['Submit']) as HTMLButtonElement

  const syncState = () => {
    submit.disabled = !(yes.checked || no.checked)
    // An illegible plate cannot be read; the answer is complete without q2.
    q2Input.disabled = no.checked
  }
  yes.addEventListener('change', syncState)
  no.addEventListener('change', syncState)

  submit.addEventListener('click', async () => {
    const q1 = yes.checked
    const q2 = q2Input.value
    if (q1 && q2.trim() === '') {
      banner.textContent = 'Please type the number you can read (Q2).'
      banner.classList.remove('hidden')
      return
    }
    submit.disabled = true
    try {
      await api.postAssessment(payload.id, q1, q2)
      callbacks.onResolved(q1, q2)
    } catch (err) {
      // the reviewer's answers stay in the form; offer a retry
      submit.disabled = false
      if (err instanceof ApiError && err.status === 409) {
        banner.textContent = 'This session was resolved elsewhere.'
        banner.classList.remove('hidden')
        callbacks.onStale()
      } else {
        banner.textContent = 'Submission failed; your answers are kept - retry.'
        banner.classList.remove('hidden')
      }
    }
  })

  root.append(
    el('h2', {}, ['Plate reading interview']),
    el('div', { class: 'plate-box' }, [plateImage(payload.image, 'plate under review')]),
    el('fieldset', {}, [
      el('legend', {}, ['Q1: Are all characters legible in the presented image?']),
      el('div', {}, [yes, el('label', { for: 'q1-yes' }, ['yes'])]),
      el('div', {}, [no, el('label', { for: 'q1-no' }, ['no'])]),
    ]),
    el('fieldset', {}, [
      el('legend', {}, ['Q2: What license number can you read from the image?']),
      q2Input,
    ]),
    submit,
    banner,
  )
}
